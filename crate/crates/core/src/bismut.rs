//! Bismut-type derivative formulas for the degenerate linear semigroup `P⁰`.
//!
//! A direction `v = (v1, v2)` is steered to zero over `[s, T]` by the control
//! `Φ`, built from the Gramian `Q_t = ∫_0^t u(t-u) e^{uA0} B B^T e^{uA0^T} du`.
//! The derivative `∇_v P⁰_{s,T} f(z)` is then `E[f(Z_T) ∫⟨σ^T(σσ^T)^{-1}Φ, dW⟩]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Hypothesis, Result};
use crate::linalg::{self, Mat, Vector};
use crate::linear_flow::LinearStepper;
use crate::model::SpectralModel;
use crate::observable::Observable;
use crate::quad;
use crate::rng::{path_rng, probe_points, substream};
use crate::stats::{dyadic, log_log_slope, Estimate};

pub const DEFAULT_STEPS: usize = 256;
pub const MAX_GRAMIAN_CONDITION: f64 = 1e14;
const WEIGHT_NODES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GramianReport {
    pub q: Mat,
    pub q_inv: Mat,
    /// `sup_t ‖Q_t^{-1}‖ t³` over `sweep`.
    pub bound_check: f64,
    pub sweep: Vec<(f64, f64)>,
}

fn witness(model: &SpectralModel) -> Result<&Mat> {
    model
        .a0
        .as_ref()
        .ok_or_else(|| Error::violation(Hypothesis::H2, "model has no A0 witness for the intertwining relation"))
}

fn gramian_matrix(model: &SpectralModel, t: f64) -> Result<Mat> {
    let a0 = witness(model)?;
    let m = model.m();
    let bbt = &model.b * model.b.transpose();
    let (v, _) = quad::adaptive_vec(
        |u| {
            let e = linalg::expm_scaled(a0, u);
            let g = (&e * &bbt * e.transpose()) * (u * (t - u));
            g.iter().copied().collect()
        },
        0.0,
        t,
        0.0,
        1e-14,
        1000,
    );
    Ok(linalg::symmetrize(&Mat::from_column_slice(m, m, &v)))
}

fn invert_gramian(q: &Mat) -> Result<Mat> {
    let cond = linalg::condition_number(q);
    if !(cond <= MAX_GRAMIAN_CONDITION) {
        return Err(Error::SingularGramian { condition: cond });
    }
    q.clone().lu().try_inverse().ok_or(Error::SingularGramian { condition: f64::INFINITY })
}

/// Gramian `Q_t`, its inverse, and `sup ‖Q_r^{-1}‖ r³` over `r ∈ {2^-6, ..., 1}`.
pub fn gramian_q(model: &SpectralModel, t: f64) -> Result<GramianReport> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("gramian needs t > 0, got {t}")));
    }
    let q = gramian_matrix(model, t)?;
    let q_inv = invert_gramian(&q)?;
    let sweep = dyadic(-6, 0)
        .into_iter()
        .map(|r| {
            let qi = invert_gramian(&gramian_matrix(model, r)?)?;
            Ok((r, linalg::op_norm(&qi) * r.powi(3)))
        })
        .collect::<Result<Vec<_>>>()?;
    let bound_check = sweep.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(GramianReport { q, q_inv, bound_check, sweep })
}

/// Control pair `(V, Φ)` steering the direction `v` to zero over `[s, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPair {
    pub s: f64,
    pub t_end: f64,
    pub v1: Vector,
    pub v2: Vector,
    pub big_v: Vector,
    a2: Mat,
    a0: Mat,
    b: Mat,
}

impl ControlPair {
    /// `Φ(r) = e^{(r-s)A2} [v2/(T-s) + ((T+s-2r) B^T + (r-s)(T-r) B^T A0^T) e^{(r-s)A0^T} V]`.
    pub fn phi(&self, r: f64) -> Vector {
        let u = r - self.s;
        let tau = self.t_end - self.s;
        let e0t = linalg::expm_scaled(&self.a0, u).transpose();
        let bt = self.b.transpose();
        let deriv = (&bt * (self.t_end + self.s - 2.0 * r) + &bt * self.a0.transpose() * (u * (self.t_end - r))) * e0t;
        linalg::expm_scaled(&self.a2, u) * (&self.v2 / tau + deriv * &self.big_v)
    }

    pub fn direction(&self) -> Vec<f64> {
        self.v1.iter().chain(self.v2.iter()).copied().collect()
    }
}

fn split_direction(model: &SpectralModel, v: &[f64]) -> Result<(Vector, Vector)> {
    if v.len() != model.dim() {
        return Err(Error::param("v", format!("expected length {}", model.dim())));
    }
    let m = model.m();
    Ok((Vector::from_column_slice(&v[..m]), Vector::from_column_slice(&v[m..])))
}

/// `V = Q_{T-s}^{-1} [v1 + ∫_s^T (T-r)/(T-s) e^{(r-s)A0} B v2 dr]` and `Φ`.
pub fn perturbation_controls(model: &SpectralModel, s: f64, t_end: f64, v: &[f64]) -> Result<ControlPair> {
    if !(t_end > s) {
        return Err(Error::Domain(format!("controls need T > s (s = {s}, T = {t_end})")));
    }
    let (v1, v2) = split_direction(model, v)?;
    let a0 = witness(model)?.clone();
    let tau = t_end - s;
    let q_inv = invert_gramian(&gramian_matrix(model, tau)?)?;
    let bv2 = &model.b * &v2;
    let (drift_part, _) = quad::adaptive_vec(
        |r| {
            let w = linalg::expm_scaled(&a0, r - s) * &bv2 * ((t_end - r) / tau);
            w.iter().copied().collect()
        },
        s,
        t_end,
        0.0,
        1e-14,
        1000,
    );
    let big_v = &q_inv * (&v1 + Vector::from_vec(drift_part));
    Ok(ControlPair { s, t_end, v1, v2, big_v, a2: model.a2.clone(), a0, b: model.b.clone() })
}

/// Step averages of `ψ(r) = σ_r^T (σ_r σ_r^T)^{-1} Φ(r)`, so the weight is
/// `Σ_i ψ̄_i ΔW_i`. Left-point values would leave an `O(h)` bias through the
/// correlation of `ψ` with the within-step convolution.
fn weight_coefficients(model: &SpectralModel, ctrl: &ControlPair, times: &[f64]) -> Result<Vec<Vector>> {
    let (nodes, weights) = quad::gauss_legendre(WEIGHT_NODES);
    times
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let mut acc: Option<Vector> = None;
            for (x, wt) in nodes.iter().zip(&weights) {
                let r = 0.5 * (a + b) + 0.5 * (b - a) * x;
                let term = model.sigma_pseudo_inverse(r)? * ctrl.phi(r) * (0.5 * wt);
                acc = Some(match acc {
                    Some(v) => v + term,
                    None => term,
                });
            }
            Ok(acc.expect("at least one node"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub direction: Vec<f64>,
    pub s: f64,
    pub t_end: f64,
    pub seed: u64,
}

impl GradientEstimate {
    fn from(est: Estimate, direction: Vec<f64>, s: f64, t_end: f64, seed: u64) -> Self {
        GradientEstimate { value: est.value, stderr: est.stderr, n_paths: est.n, direction, s, t_end, seed }
    }

    pub fn within(&self, target: f64, k: f64) -> bool {
        Estimate { value: self.value, stderr: self.stderr, n: self.n_paths }.within(target, k)
    }

    pub const CSV_HEADER: &'static str = "s,T,component,direction,value,stderr,n_paths,seed";

    pub fn csv_row(&self, component: &str) -> String {
        let dir: Vec<String> = self.direction.iter().map(|x| format!("{x}")).collect();
        format!(
            "{},{},{},{},{:.12e},{:.6e},{},{}",
            self.s,
            self.t_end,
            component,
            dir.join(";"),
            self.value,
            self.stderr,
            self.n_paths,
            self.seed
        )
    }
}

fn check_budget(n_paths: usize, n_steps: usize) -> Result<()> {
    if n_paths < 2 {
        return Err(Error::param("n_paths", "need at least 2 paths for a standard error"));
    }
    if n_steps == 0 {
        return Err(Error::param("n_steps", "must be at least 1"));
    }
    Ok(())
}

/// Monte-Carlo estimate of `∇_v P⁰_{s,T} f(z)`.
#[allow(clippy::too_many_arguments)]
pub fn bismut_gradient(
    model: &SpectralModel,
    s: f64,
    t_end: f64,
    f: &Observable,
    z: &[f64],
    v: &[f64],
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<GradientEstimate> {
    check_budget(n_paths, n_steps)?;
    let ctrl = perturbation_controls(model, s, t_end, v)?;
    let stepper = LinearStepper::new(model, s, t_end, n_steps)?;
    let coeffs = weight_coefficients(model, &ctrl, &stepper.times)?;
    let root = substream(seed, "bismut.gradient");
    let samples: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(root, p as u64);
            let mut weight = 0.0;
            let zt = stepper.run(z, &mut rng, |i, _, dw| weight += coeffs[i].iter().zip(dw).map(|(c, w)| c * w).sum::<f64>());
            f.eval(&zt) * weight
        })
        .collect();
    Ok(GradientEstimate::from(Estimate::from_samples(&samples), v.to_vec(), s, t_end, seed))
}

/// Monte-Carlo estimate of `∇_v ∇_ṽ P⁰_{s,T} f(z)`: the path is split at
/// `t = (s+T)/2`, `ṽ` is steered over `[s, t]` and the transported direction
/// `v_t = e^{(t-s)𝔸} v` over `[t, T]`; the estimator is `f(Z_T)` times the
/// product of the two weights. `n_steps` is the total and must be even.
#[allow(clippy::too_many_arguments)]
pub fn bismut_hessian(
    model: &SpectralModel,
    s: f64,
    t_end: f64,
    f: &Observable,
    z: &[f64],
    v: &[f64],
    v_tilde: &[f64],
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<GradientEstimate> {
    check_budget(n_paths, n_steps)?;
    if !n_steps.is_multiple_of(2) || n_steps < 2 {
        return Err(Error::param("n_steps", "must be even for the midpoint split"));
    }
    let mid = 0.5 * (s + t_end);
    let v_t = linalg::expm_scaled(&model.generator(), mid - s) * Vector::from_column_slice(v);
    let first = perturbation_controls(model, s, mid, v_tilde)?;
    let second = perturbation_controls(model, mid, t_end, v_t.as_slice())?;
    let half = n_steps / 2;
    let st1 = LinearStepper::new(model, s, mid, half)?;
    let st2 = LinearStepper::new(model, mid, t_end, half)?;
    let c1 = weight_coefficients(model, &first, &st1.times)?;
    let c2 = weight_coefficients(model, &second, &st2.times)?;
    let root = substream(seed, "bismut.hessian");
    let samples: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(root, p as u64);
            let (mut w1, mut w2) = (0.0, 0.0);
            let zm = st1.run(z, &mut rng, |i, _, dw| w1 += c1[i].iter().zip(dw).map(|(c, w)| c * w).sum::<f64>());
            let zt = st2.run(&zm, &mut rng, |i, _, dw| w2 += c2[i].iter().zip(dw).map(|(c, w)| c * w).sum::<f64>());
            f.eval(&zt) * w1 * w2
        })
        .collect();
    Ok(GradientEstimate::from(Estimate::from_samples(&samples), v.to_vec(), s, t_end, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    /// `ε |Δ(T)|` with `Δ(T) = e^{(T-s)𝔸} v - ∫_s^T e^{(T-r)𝔸} [0; Φ(r)] dr`.
    pub terminal_gap: f64,
    pub girsanov: Estimate,
}

/// Checks that the controlled perturbation vanishes at `T` and that the
/// Girsanov weight `R_ε = exp(-ε Σ⟨ψ_i, ΔW_i⟩ - ε²/2 Σ |ψ_i|² h)`,
/// `ψ = σ^T(σσ^T)^{-1}Φ`, has mean one.
#[allow(clippy::too_many_arguments)]
pub fn verify_coupling(
    model: &SpectralModel,
    s: f64,
    t_end: f64,
    v: &[f64],
    eps: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<CouplingReport> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::param("eps", "must lie in [0, 1)"));
    }
    check_budget(n_paths, n_steps)?;
    let ctrl = perturbation_controls(model, s, t_end, v)?;
    let a = model.generator();
    let (m, dim) = (model.m(), model.dim());
    let (integral, _) = quad::adaptive_vec(
        |r| {
            let mut u = Vector::zeros(dim);
            u.rows_mut(m, model.d()).copy_from(&ctrl.phi(r));
            (linalg::expm_scaled(&a, t_end - r) * u).iter().copied().collect()
        },
        s,
        t_end,
        1e-15,
        1e-14,
        2000,
    );
    let delta = linalg::expm_scaled(&a, t_end - s) * Vector::from_column_slice(v) - Vector::from_vec(integral);
    let terminal_gap = eps * delta.norm();

    let stepper = LinearStepper::new(model, s, t_end, n_steps)?;
    let coeffs = weight_coefficients(model, &ctrl, &stepper.times)?;
    let h = stepper.h();
    let qv: f64 = coeffs.iter().map(|c| c.norm_squared() * h).sum();
    let root = substream(seed, "bismut.verify_coupling");
    let samples: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(root, p as u64);
            let mut mart = 0.0;
            stepper.run(&vec![0.0; dim], &mut rng, |i, _, dw| mart += coeffs[i].iter().zip(dw).map(|(c, w)| c * w).sum::<f64>());
            (-eps * mart - 0.5 * eps * eps * qv).exp()
        })
        .collect();
    Ok(CouplingReport { terminal_gap, girsanov: Estimate::from_samples(&samples) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    /// Ratio on `[s, T]` itself.
    pub ratio: f64,
    /// Largest ratio over the sweep `T - s, (T - s)/2, ..., (T - s)/64`.
    pub sup_ratio: f64,
    pub sweep: Vec<(f64, f64)>,
}

/// `∫_s^T |σ^T(σσ^T)^{-1}Φ(r)|² dr / (|v1|²/(T-s)³ + |v2|²/(T-s))`.
pub fn variance_bound_check(model: &SpectralModel, s: f64, t_end: f64, v: &[f64]) -> Result<VarianceReport> {
    if !(t_end > s) {
        return Err(Error::Domain(format!("need T > s (s = {s}, T = {t_end})")));
    }
    let (v1, v2) = split_direction(model, v)?;
    let denom_norm = |g: f64| v1.norm_squared() / g.powi(3) + v2.norm_squared() / g;
    let ratio_at = |g: f64| -> Result<f64> {
        let ctrl = perturbation_controls(model, s, s + g, v)?;
        model.sigma_pseudo_inverse(s)?;
        model.sigma_pseudo_inverse(s + g)?;
        let val = quad::adaptive(
            |r| model.sigma_pseudo_inverse(r).map_or(f64::NAN, |p| (p * ctrl.phi(r)).norm_squared()),
            s,
            s + g,
            0.0,
            1e-12,
        );
        if !val.is_finite() {
            return Err(Error::violation(Hypothesis::H1, "sigma sigma^T singular inside the interval"));
        }
        Ok(val / denom_norm(g))
    };
    let tau = t_end - s;
    let sweep = (0..=6)
        .map(|k| {
            let g = tau * 2f64.powi(-k);
            Ok((g, ratio_at(g)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let sup_ratio = sweep.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(VarianceReport { ratio: sweep[0].1, sup_ratio, sweep })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    X,
    Y,
}

impl Component {
    pub fn label(&self) -> &'static str {
        match self {
            Component::X => "x",
            Component::Y => "y",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub slope: f64,
    pub gaps: Vec<f64>,
    /// Largest `|∇ P⁰_{0,g} f|` over probes and unit directions, per gap.
    pub sups: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// Set when some sup estimate has relative standard error above 25%.
    pub wide_confidence: bool,
}

pub const PROBE_COUNT: usize = 8;
pub const PROBE_RADIUS: f64 = 2.0;

/// Fitted slope of `log sup_z |∇^{(component)} P⁰_{0,g} f(z)|` against `log g`.
/// Probes are 8 quasi-random points in the ball of radius 2 (the first is the
/// origin); directions are the unit vectors of the chosen component.
pub fn scaling_exponent(
    model: &SpectralModel,
    f: &Observable,
    component: Component,
    gaps: &[f64],
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<ScalingReport> {
    if gaps.len() < 4 {
        return Err(Error::param("gaps", "need at least 4 gaps"));
    }
    let (m, dim) = (model.m(), model.dim());
    let axes: Vec<usize> = match component {
        Component::X => (0..m).collect(),
        Component::Y => (m..dim).collect(),
    };
    let probes = probe_points(PROBE_COUNT, dim, PROBE_RADIUS);
    let mut sups = Vec::new();
    let mut stderrs = Vec::new();
    let mut wide = false;
    for (gi, g) in gaps.iter().enumerate() {
        let mut best = (0.0, 0.0);
        for (pi, z) in probes.iter().enumerate() {
            for &a in &axes {
                let mut v = vec![0.0; dim];
                v[a] = 1.0;
                let sub = substream(seed, &format!("bismut.scaling.{gi}.{pi}.{a}"));
                let est = bismut_gradient(model, 0.0, *g, f, z, &v, n_paths, n_steps, sub)?;
                if est.value.abs() > best.0 {
                    best = (est.value.abs(), est.stderr);
                }
            }
        }
        if best.1 > 0.25 * best.0 {
            wide = true;
        }
        sups.push(best.0);
        stderrs.push(best.1);
    }
    let slope = log_log_slope(gaps, &sups);
    Ok(ScalingReport { slope, gaps: gaps.to_vec(), sups, stderrs, wide_confidence: wide })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sigma;
    use approx::assert_relative_eq;

    fn kin() -> SpectralModel {
        SpectralModel::kinetic_scalar()
    }

    #[test]
    fn scalar_gramian() {
        let r = gramian_q(&kin(), 0.5).unwrap();
        assert_relative_eq!(r.q[(0, 0)], 0.125 / 6.0, max_relative = 1e-12);
        assert_relative_eq!(r.bound_check, 6.0, max_relative = 1e-9);
    }

    #[test]
    fn diagonal_gramian() {
        let model = SpectralModel::new(
            Mat::zeros(2, 2),
            Mat::zeros(2, 2),
            Mat::from_diagonal(&Vector::from_vec(vec![1.0, 2.0])),
            Some(Mat::zeros(2, 2)),
            Sigma::Constant(Mat::identity(2, 2)),
        )
        .unwrap();
        let t: f64 = 0.8;
        let r = gramian_q(&model, t).unwrap();
        assert_relative_eq!(r.q[(0, 0)], t.powi(3) / 6.0, max_relative = 1e-12);
        assert_relative_eq!(r.q[(1, 1)], 2.0 * t.powi(3) / 3.0, max_relative = 1e-12);
        assert!(r.q[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn singular_gramian_is_reported() {
        let mut model = kin();
        model.b = Mat::zeros(1, 1);
        assert!(matches!(gramian_q(&model, 1.0), Err(Error::SingularGramian { .. })));
    }

    #[test]
    fn scalar_controls() {
        let c = perturbation_controls(&kin(), 0.0, 1.0, &[0.0, 1.0]).unwrap();
        assert_relative_eq!(c.big_v[0], 3.0, max_relative = 1e-12);
        for r in [0.0, 0.3, 1.0] {
            assert_relative_eq!(c.phi(r)[0], 4.0 - 6.0 * r, epsilon = 1e-12);
        }
        let c = perturbation_controls(&kin(), 0.0, 1.0, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(c.big_v[0], 6.0, max_relative = 1e-12);
        assert_relative_eq!(c.phi(0.25)[0], 3.0, epsilon = 1e-12);
        let c = perturbation_controls(&kin(), 0.0, 1.0, &[0.0, 0.0]).unwrap();
        assert_eq!(c.big_v[0], 0.0);
        assert_eq!(c.phi(0.5)[0], 0.0);
    }

    #[test]
    fn coupling_closes_for_non_trivial_drift_matrix() {
        // A1 = [[-0.5, 0.3], [-0.3, -0.5]], A2 = 0 with witness A0 = -A1
        let a1 = Mat::from_row_slice(2, 2, &[-0.5, 0.3, -0.3, -0.5]);
        let model = SpectralModel::new(
            a1.clone(),
            Mat::zeros(2, 2),
            Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]),
            Some(-a1),
            Sigma::Constant(Mat::identity(2, 2)),
        )
        .unwrap();
        let r = verify_coupling(&model, 0.2, 1.1, &[0.3, -1.0, 0.7, 0.4], 0.5, 100, 32, 1).unwrap();
        assert!(r.terminal_gap < 1e-8, "gap {}", r.terminal_gap);
    }

    #[test]
    fn coupling_closes_for_spectral_model() {
        let model = SpectralModel::spectral(vec![1.0, 4.0], Sigma::Constant(Mat::identity(2, 2)), 0.4, crate::model::TailRule::None).unwrap();
        let r = verify_coupling(&model, 0.0, 0.5, &[1.0, 0.5, -0.2, 1.0], 0.5, 50, 16, 2).unwrap();
        assert!(r.terminal_gap < 1e-8, "gap {}", r.terminal_gap);
    }

    #[test]
    fn zero_eps_girsanov_weight_is_one() {
        let r = verify_coupling(&kin(), 0.0, 1.0, &[1.0, 1.0], 0.0, 50, 16, 3).unwrap();
        assert_eq!(r.girsanov.value, 1.0);
        assert_eq!(r.terminal_gap, 0.0);
    }

    #[test]
    fn variance_ratios() {
        let r = variance_bound_check(&kin(), 0.0, 1.0, &[0.0, 1.0]).unwrap();
        assert_relative_eq!(r.ratio, 4.0, max_relative = 1e-9);
        let r = variance_bound_check(&kin(), 0.0, 1.0, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(r.ratio, 12.0, max_relative = 1e-9);
        for (_, q) in r.sweep {
            assert_relative_eq!(q, 12.0, max_relative = 1e-8);
        }
    }

    #[test]
    fn gradient_of_position() {
        let f = Observable::coordinate(0);
        let e = bismut_gradient(&kin(), 0.0, 1.0, &f, &[0.0, 0.0], &[0.0, 1.0], 20_000, 64, 7).unwrap();
        assert!(e.within(1.0, 5.0), "{e:?}");
    }

    #[test]
    fn weight_is_linear_in_direction() {
        let f = Observable::coordinate(0);
        let a = bismut_gradient(&kin(), 0.0, 1.0, &f, &[0.1, 0.0], &[0.3, 1.0], 500, 32, 7).unwrap();
        let b = bismut_gradient(&kin(), 0.0, 1.0, &f, &[0.1, 0.0], &[0.6, 2.0], 500, 32, 7).unwrap();
        assert_eq!(2.0 * a.value, b.value);
    }

    #[test]
    fn singular_noise_is_an_h1_violation() {
        let mut model = kin();
        model.sigma = Sigma::Constant(Mat::zeros(1, 1));
        let r = bismut_gradient(&model, 0.0, 1.0, &Observable::coordinate(0), &[0.0, 0.0], &[0.0, 1.0], 10, 4, 0);
        assert!(matches!(r, Err(Error::HypothesisViolation { hypothesis: Hypothesis::H1, .. })));
    }
}
