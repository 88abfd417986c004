//! A-priori envelope `g(t) ≤ Γ^{-1}(Γ(η) + t)` with
//! `Γ(s) = ∫_1^s dr / (2ℓ(C + C r))`, and its check along simulated paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrate::{integrate_mild, Noise};
use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::model::{DriftSpec, SpectralModel};
use crate::quad;

const BISECT_ITER: usize = 200;
/// Brackets beyond this size mean `Γ` saturates below the target.
const BRACKET_CAP: f64 = 1e150;
const QUAD_ABS: f64 = 1e-13;
const QUAD_REL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BihariCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub eta: f64,
    pub c_env: f64,
    /// `Γ` stayed below `Γ(η) + t` on every bracket up to `1e150`: the growth
    /// function is too fast for the Osgood divergence the bound relies on.
    /// The affected values are `+∞`.
    pub non_osgood: bool,
}

impl BihariCurve {
    pub const CSV_HEADER: &'static str = "t,bound";

    pub fn csv_rows(&self) -> Vec<String> {
        self.times.iter().zip(&self.values).map(|(t, v)| format!("{t},{v}")).collect()
    }
}

/// `∫_a^b dr / (2ℓ(C + C r))`, integrated in `log(1 + r)` so long brackets
/// stay cheap.
fn gamma_between(ell: &dyn Fn(f64) -> f64, c: f64, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let g = |v: f64| {
        let r = v.exp() - 1.0;
        (r + 1.0) / (2.0 * ell(c + c * r))
    };
    quad::adaptive(g, a.ln_1p(), b.ln_1p(), QUAD_ABS, QUAD_REL)
}

/// The envelope at `n_points` uniform times on `[0, T]`.
pub fn bihari_bound(ell: &dyn Fn(f64) -> f64, eta: f64, horizon: f64, c_env: f64, n_points: usize) -> Result<BihariCurve> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::param("eta", "must be finite and nonnegative"));
    }
    if !(c_env > 1.0) {
        return Err(Error::param("c_env", "must exceed 1"));
    }
    if !(horizon > 0.0) || n_points < 2 {
        return Err(Error::param("n_points", "need T > 0 and at least 2 points"));
    }
    let times: Vec<f64> = (0..n_points).map(|i| horizon * i as f64 / (n_points - 1) as f64).collect();
    let mut values = Vec::with_capacity(n_points);
    let mut non_osgood = false;
    // s(t) is increasing, so each search starts from the previous value
    let mut lo = eta;
    let mut lo_excess = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if i == 0 {
            values.push(eta);
            continue;
        }
        if non_osgood {
            values.push(f64::INFINITY);
            continue;
        }
        // find s with Γ(s) - Γ(η) = t; `lo_excess` tracks Γ(lo) - Γ(η)
        let mut hi = (2.0 * lo).max(lo + 1.0);
        let mut hi_excess = lo_excess + gamma_between(ell, c_env, lo, hi);
        while hi_excess < t {
            if hi > BRACKET_CAP || !hi_excess.is_finite() {
                non_osgood = true;
                break;
            }
            lo = hi;
            lo_excess = hi_excess;
            hi *= 2.0;
            hi_excess = lo_excess + gamma_between(ell, c_env, lo, hi);
        }
        if non_osgood {
            values.push(f64::INFINITY);
            continue;
        }
        let (mut a, mut fa) = (lo, lo_excess);
        let mut b = hi;
        for _ in 0..BISECT_ITER {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let fm = fa + gamma_between(ell, c_env, a, mid);
            if fm < t {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
        }
        values.push(b);
        lo = a;
        lo_excess = fa;
    }
    Ok(BihariCurve { times, values, eta, c_env, non_osgood })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub n_paths: usize,
    pub blow_ups: usize,
    /// Paths with `sup_{s≤t} |Ỹ_s|²` above the envelope at some grid time.
    pub violations: usize,
    /// Largest `g(t) / bound(t)` over paths and times.
    pub max_ratio: f64,
    /// Paths whose curve was flagged non-Osgood.
    pub non_osgood: usize,
}

impl EnvelopeReport {
    pub const CSV_HEADER: &'static str = "n_paths,blow_ups,violations,max_ratio,non_osgood";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.n_paths, self.blow_ups, self.violations, self.max_ratio, self.non_osgood)
    }
}

/// Smallest admissible constant in `|X_r|² ≤ C + (C - 1) sup_{s≤r} |Ỹ_s|²`,
/// kept strictly above 1.
pub fn envelope_constant(x_sq: &[f64], g: &[f64]) -> f64 {
    x_sq.iter()
        .zip(g)
        .map(|(x, g)| (x + g) / (1.0 + g))
        .fold(1.0 + 1e-9, f64::max)
}

/// Simulates `n_paths` paths and compares `g(t) = sup_{s≤t} |Y_s - ξ_s|²`,
/// `ξ` the stochastic convolution, with the envelope built from the path's
/// measured `η_T = |Y_0|² + 2∫_0^T h(|ξ_s|) ds` and envelope constant. The
/// curve is evaluated at `curve_points` times and compared at each grid time
/// against its value at the nearest earlier curve time.
#[allow(clippy::too_many_arguments)]
pub fn envelope_check(
    model: &SpectralModel,
    b: &DriftSpec,
    z0: &[f64],
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    curve_points: usize,
    seed: u64,
) -> Result<EnvelopeReport> {
    let (Some(ell), Some(h)) = (b.ell, b.h) else {
        return Err(Error::param("b", "drift declares no growth functions"));
    };
    let (m, d) = (model.m(), model.d());
    let e = linalg::expm_scaled(&model.a2, horizon / n_steps as f64);
    let results: Vec<(bool, bool, f64, bool)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|index| -> Result<(bool, bool, f64, bool)> {
            let traj = integrate_mild(model, b, z0, horizon, n_steps, Noise::Seed { seed, index })?;
            if traj.blow_up.is_some() {
                return Ok((true, false, f64::INFINITY, false));
            }
            let times = traj.times();
            let mut xi = Vector::zeros(d);
            let mut g = Vec::with_capacity(n_steps + 1);
            let mut x_sq = Vec::with_capacity(n_steps + 1);
            let mut h_xi = Vec::with_capacity(n_steps + 1);
            let mut sup = 0.0_f64;
            for i in 0..=n_steps {
                if i > 0 {
                    xi = &e * xi + Vector::from_column_slice(&traj.noise.conv_at(i - 1)[m..]);
                }
                let z = traj.state(i);
                let y_tilde = Vector::from_column_slice(&z[m..]) - &xi;
                sup = sup.max(y_tilde.norm_squared());
                g.push(sup);
                x_sq.push(z[..m].iter().map(|v| v * v).sum::<f64>());
                h_xi.push(h.eval(xi.norm()));
            }
            let dt = times[1] - times[0];
            let integral: f64 = h_xi.windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).sum();
            let y0_sq: f64 = z0[m..].iter().map(|v| v * v).sum();
            let eta = y0_sq + 2.0 * integral;
            let c_env = envelope_constant(&x_sq, &g);
            let curve = bihari_bound(&|r| ell.eval(r), eta, horizon, c_env, curve_points)?;
            let mut ratio = 0.0_f64;
            for (i, &t) in times.iter().enumerate() {
                let j = (((t / horizon) * (curve_points - 1) as f64) + 1e-9).floor() as usize;
                ratio = ratio.max(g[i] / curve.values[j.min(curve_points - 1)]);
            }
            Ok((false, ratio > 1.0, ratio, curve.non_osgood))
        })
        .collect::<Result<_>>()?;
    Ok(EnvelopeReport {
        n_paths,
        blow_ups: results.iter().filter(|r| r.0).count(),
        violations: results.iter().filter(|r| r.1).count(),
        max_ratio: results.iter().filter(|r| !r.0).map(|r| r.2).fold(0.0, f64::max),
        non_osgood: results.iter().filter(|r| r.3).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_growth_gives_affine_bound() {
        // Γ(s) = (s - 1) / (2L), so the bound is η + 2 L t
        let curve = bihari_bound(&|_| 1.5, 0.7, 2.0, 3.0, 9).unwrap();
        for (t, v) in curve.times.iter().zip(&curve.values) {
            assert!((v - (0.7 + 3.0 * t)).abs() < 1e-9 * (1.0 + v), "{t}: {v}");
        }
        assert!(!curve.non_osgood);
    }

    #[test]
    fn linear_growth_gives_exponential_bound() {
        // Γ(s) = log((1 + s)/2) / (2C): s(t) = (1 + η) e^{2Ct} - 1
        let c = 2.0;
        let curve = bihari_bound(&|r| r, 0.3, 1.0, c, 11).unwrap();
        for (t, v) in curve.times.iter().zip(&curve.values) {
            let exact = 1.3 * (2.0 * c * t).exp() - 1.0;
            assert!((v - exact).abs() < 1e-8 * exact, "{t}: {v} vs {exact}");
        }
    }

    #[test]
    fn starts_at_eta() {
        let curve = bihari_bound(&|r| 1.0 + r, 4.2, 1.0, 1.5, 3).unwrap();
        assert_eq!(curve.values[0], 4.2);
    }

    #[test]
    fn superlinear_growth_is_flagged() {
        let curve = bihari_bound(&|r| r * r, 1.0, 10.0, 2.0, 5).unwrap();
        assert!(curve.non_osgood);
        assert!(curve.values.last().unwrap().is_infinite());
    }

    #[test]
    fn envelope_constant_is_minimal() {
        let x = [4.0, 1.0];
        let g = [1.0, 0.0];
        let c = envelope_constant(&x, &g);
        for (xi, gi) in x.iter().zip(&g) {
            assert!(*xi <= c + (c - 1.0) * gi + 1e-12);
        }
        assert!((c - 2.5).abs() < 1e-12);
    }
}
