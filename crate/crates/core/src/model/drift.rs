//! Drift coefficients `b_t(x, y)` with their declared regularity and growth.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::modulus::Modulus;
use crate::error::{Error, Result};
use crate::rng::path_rng;

/// `(t, z, out)`: writes `b_t(x, y)` into `out` (length `d`), `z = (x, y)`.
pub type DriftFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// Scalar profile `g(t, x, y)` of a mode-separable drift `b_i = a_i g(t, x_i, y_i)`.
pub type ModeProfile = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Nondecreasing positive growth function used in the one-sided growth
/// conditions on the drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Growth {
    /// `a + b r`.
    Affine { a: f64, b: f64 },
    /// `c r^p`.
    Power { c: f64, p: f64 },
}

impl Growth {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Growth::Affine { a, b } => a + b * r,
            Growth::Power { c, p } => c * r.max(0.0).powf(p),
        }
    }
}

#[derive(Clone)]
pub struct ModeSeparable {
    pub coeffs: Vec<f64>,
    pub profile: ModeProfile,
}

#[derive(Clone)]
pub struct DriftSpec {
    pub name: String,
    pub m: usize,
    pub d: usize,
    eval: DriftFn,
    /// Hölder exponent in `x`.
    pub alpha: f64,
    /// Hölder constant in `x`.
    pub k: f64,
    /// Modulus in `y`.
    pub modulus: Modulus,
    /// Extra Lipschitz term in `y` (from shifting a linear part into the drift).
    pub y_lipschitz: f64,
    /// `sup |b|`, `None` for unbounded drifts.
    pub sup_bound: Option<f64>,
    /// Global Lipschitz constant when one is known.
    pub lipschitz: Option<f64>,
    pub ell: Option<Growth>,
    pub h: Option<Growth>,
    /// Present when `b_i(t, z) = a_i g(t, x_i, y_i)`.
    pub modewise: Option<ModeSeparable>,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("d", &self.d)
            .field("alpha", &self.alpha)
            .field("k", &self.k)
            .field("modulus", &self.modulus)
            .field("sup_bound", &self.sup_bound)
            .finish_non_exhaustive()
    }
}

impl DriftSpec {
    pub fn new(name: impl Into<String>, m: usize, d: usize, eval: DriftFn) -> Self {
        DriftSpec {
            name: name.into(),
            m,
            d,
            eval,
            alpha: 1.0,
            k: 1.0,
            modulus: Modulus::power(1.0, 1.0),
            y_lipschitz: 0.0,
            sup_bound: None,
            lipschitz: None,
            ell: None,
            h: None,
            modewise: None,
        }
    }

    pub fn with_regularity(mut self, alpha: f64, k: f64, modulus: Modulus) -> Self {
        self.alpha = alpha;
        self.k = k;
        self.modulus = modulus;
        self
    }

    pub fn with_bound(mut self, sup: f64) -> Self {
        self.sup_bound = Some(sup);
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn with_growth(mut self, ell: Growth, h: Growth) -> Self {
        self.ell = Some(ell);
        self.h = Some(h);
        self
    }

    #[inline]
    pub fn eval_into(&self, t: f64, z: &[f64], out: &mut [f64]) {
        (self.eval)(t, z, out)
    }

    pub fn eval(&self, t: f64, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        (self.eval)(t, z, &mut out);
        out
    }

    pub fn evaluator(&self) -> DriftFn {
        self.eval.clone()
    }

    /// `b ≡ 0`.
    pub fn zero(m: usize, d: usize) -> Self {
        DriftSpec::new("zero", m, d, Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)))
            .with_bound(0.0)
            .with_lipschitz(0.0)
    }

    /// `b ≡ c`.
    pub fn constant(m: usize, c: Vec<f64>) -> Self {
        let d = c.len();
        let sup = crate::linalg::norm(&c);
        DriftSpec::new("constant", m, d, Arc::new(move |_, _, out: &mut [f64]| out.copy_from_slice(&c)))
            .with_bound(sup)
            .with_lipschitz(0.0)
    }

    /// Regularity envelope `K|Δx|^α + φ(|Δy|) + L_y |Δy|`.
    pub fn envelope(&self, dx: f64, dy: f64) -> f64 {
        self.k * dx.powf(self.alpha) + self.modulus.eval(dy) + self.y_lipschitz * dy
    }
}

/// Maximum of `|b(z) - b(z')| - K|x - x'|^α - φ(|y - y'|)` over randomized
/// pairs in the ball of radius `ball_radius`.
///
/// Pair `i` is generated from its own stream, so a larger `n_samples` only
/// adds pairs. Offsets have log-uniform length in `[1e-8, ball_radius]`, and a
/// quarter of the anchors have their `y` part pulled to within the offset
/// scale of `y = 0`, where rough moduli are hardest to satisfy.
pub fn validate_drift_regularity(b: &DriftSpec, ball_radius: f64, n_samples: usize, seed: u64) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::param("n_samples", "must be at least 1"));
    }
    if !(ball_radius > 0.0) {
        return Err(Error::param("ball_radius", "must be positive"));
    }
    let (m, d) = (b.m, b.d);
    let dim = m + d;
    let mut worst = f64::NEG_INFINITY;
    let mut out1 = vec![0.0; d];
    let mut out2 = vec![0.0; d];
    for i in 0..n_samples {
        let mut rng = path_rng(seed, i as u64);
        let t: f64 = rng.random();
        let mut z = random_in_ball(&mut rng, dim, ball_radius);
        let scale = ball_radius * (1e-8f64).powf(rng.random::<f64>());
        if rng.random::<f64>() < 0.25 {
            for v in &mut z[m..] {
                *v *= scale / ball_radius;
            }
        }
        let dir = random_unit(&mut rng, dim);
        let mut z2: Vec<f64> = z.iter().zip(&dir).map(|(a, u)| a + scale * u).collect();
        let r2 = crate::linalg::norm(&z2);
        if r2 > ball_radius {
            z2.iter_mut().for_each(|v| *v *= ball_radius / r2);
        }
        b.eval_into(t, &z, &mut out1);
        b.eval_into(t, &z2, &mut out2);
        if out1.iter().chain(&out2).any(|v| !v.is_finite()) {
            return Err(Error::Evaluator(format!("drift `{}` returned a non-finite value", b.name)));
        }
        let diff = out1.iter().zip(&out2).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let dx = crate::linalg::norm(&z[..m].iter().zip(&z2[..m]).map(|(p, q)| p - q).collect::<Vec<_>>());
        let dy = crate::linalg::norm(&z[m..].iter().zip(&z2[m..]).map(|(p, q)| p - q).collect::<Vec<_>>());
        worst = worst.max(diff - b.envelope(dx, dy));
    }
    Ok(worst)
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = crate::linalg::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn random_in_ball(rng: &mut impl Rng, dim: usize, radius: f64) -> Vec<f64> {
    let u = random_unit(rng, dim);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    u.into_iter().map(|x| x * r).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_drift_has_no_violation() {
        let b = DriftSpec::constant(1, vec![0.3]);
        assert!(validate_drift_regularity(&b, 1.0, 500, 1).unwrap() <= 0.0);
    }

    #[test]
    fn sine_drift_is_three_quarter_holder() {
        let b = DriftSpec::new("sin", 1, 1, Arc::new(|_, z: &[f64], out: &mut [f64]| out[0] = z[0].sin()))
            .with_regularity(0.75, 1.0, Modulus::power(1.0, 0.5));
        assert!(validate_drift_regularity(&b, 1.0, 2000, 3).unwrap() <= 0.0);
    }

    #[test]
    fn quarter_root_in_y_violates_sqrt_modulus() {
        let b = DriftSpec::new("root", 1, 1, Arc::new(|_, z: &[f64], out: &mut [f64]| out[0] = z[1].abs().powf(0.25)))
            .with_regularity(0.75, 1.0, Modulus::power(1.0, 0.5));
        assert!(validate_drift_regularity(&b, 1.0, 2000, 3).unwrap() > 0.0);
    }

    #[test]
    fn non_finite_evaluator_is_reported() {
        let b = DriftSpec::new("nan", 1, 1, Arc::new(|_, _, out: &mut [f64]| out[0] = f64::NAN));
        assert!(matches!(validate_drift_regularity(&b, 1.0, 3, 0), Err(Error::Evaluator(_))));
    }
}
