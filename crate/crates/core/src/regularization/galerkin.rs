//! Galerkin truncations of the fixed-point equation for the spectral family.
//!
//! For a mode-separable drift `b_i = a_i g(t, x_i, y_i)` the truncated equation
//! with `π₂^{(n)} b` decouples: component `i < n` of `u^{λ,n}` solves a
//! two-dimensional fixed point in `(x_i, y_i)` and the other components vanish.
//! The truncation levels therefore share the per-mode solutions.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{FieldGrid, GridSpec};
use super::solver::picard_solve;
use super::transform::field_grad2;
use crate::error::{Error, Result};
use crate::model::{DriftSpec, Sigma, SpectralModel, TailRule};
use crate::rng::probe_points;

pub const GALERKIN_TOL: f64 = 1e-10;
pub const GALERKIN_MAX_ITER: usize = 200;
pub const GALERKIN_PROBES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalerkinGap {
    pub n_small: usize,
    pub n_large: usize,
    pub lambda: f64,
    /// `sup_z |u^{λ,n_large}_0(z) - u^{λ,n_small}_0(z)|` over the probes.
    pub value_gap: f64,
    /// Same for the operator norm of the `y`-Jacobians.
    pub grad_gap: f64,
}

/// Per-mode fields `u_i` on a two-dimensional grid.
#[derive(Debug, Clone)]
pub struct ModeFields {
    pub lambda: f64,
    pub fields: Vec<FieldGrid>,
}

fn mode_model(model: &SpectralModel, i: usize) -> Result<SpectralModel> {
    let eig = model.eigenvalues.as_ref().expect("checked spectral");
    let sigma = match &model.sigma {
        Sigma::Constant(s) => Sigma::Constant(s.rows(i, 1).into_owned()),
        Sigma::TimeDependent { cols, f, .. } => {
            let f = f.clone();
            Sigma::TimeDependent { rows: 1, cols: *cols, f: Arc::new(move |t| f(t).rows(i, 1).into_owned()) }
        }
    };
    SpectralModel::spectral(vec![eig[i]], sigma, model.delta, TailRule::None)
}

/// Solves the per-mode fixed points for modes `0..n_modes`.
pub fn solve_modes(model: &SpectralModel, b: &DriftSpec, lambda: f64, n_modes: usize, spec: &GridSpec) -> Result<ModeFields> {
    if model.eigenvalues.is_none() {
        return Err(Error::Capability("Galerkin comparison needs a spectral-family model".into()));
    }
    let sep = b
        .modewise
        .as_ref()
        .ok_or_else(|| Error::Capability("Galerkin comparison needs a mode-separable drift".into()))?;
    if n_modes > model.d() {
        return Err(Error::param("n_large", format!("at most {} modes available", model.d())));
    }
    if spec.axes.len() != 2 {
        return Err(Error::param("grid.axes", "per-mode grids are two-dimensional"));
    }
    let fields = (0..n_modes)
        .into_par_iter()
        .map(|i| {
            let mm = mode_model(model, i)?;
            let a = sep.coeffs[i];
            let g = sep.profile.clone();
            let bi = DriftSpec::new(format!("{}[{i}]", b.name), 1, 1, Arc::new(move |t, z: &[f64], out: &mut [f64]| {
                out[0] = a * g(t, z[0], z[1]);
            }));
            picard_solve(&mm, &bi, lambda, spec, GALERKIN_TOL, GALERKIN_MAX_ITER).map(|(u, _)| u)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModeFields { lambda, fields })
}

impl ModeFields {
    /// Gap between truncation levels `n_small < n_large` over probe points in
    /// the ball of radius `radius`, at time 0.
    pub fn gap(&self, n_small: usize, n_large: usize, radius: f64) -> Result<GalerkinGap> {
        if !(n_small < n_large) || n_large > self.fields.len() {
            return Err(Error::param("n_small", format!("need n_small < n_large <= {}", self.fields.len())));
        }
        let d = self.fields.len();
        let mut value_gap = 0.0_f64;
        let mut grad_gap = 0.0_f64;
        for z in probe_points(GALERKIN_PROBES, 2 * d, radius) {
            let mut v2 = 0.0;
            let mut g = 0.0_f64;
            for i in n_small..n_large {
                let zi = [z[i], z[d + i]];
                let u = self.fields[i].eval(0.0, &zi)[0];
                v2 += u * u;
                // the y-Jacobian of the difference is diagonal
                g = g.max(field_grad2(&self.fields[i], 0.0, &zi)?.jacobian[(0, 0)].abs());
            }
            value_gap = value_gap.max(v2.sqrt());
            grad_gap = grad_gap.max(g);
        }
        Ok(GalerkinGap { n_small, n_large, lambda: self.lambda, value_gap, grad_gap })
    }
}

/// Solves the truncated equations at `n_small` and `n_large` modes and
/// reports the sup gaps of values and `y`-gradients.
pub fn galerkin_compare(
    model: &SpectralModel,
    b: &DriftSpec,
    lambda: f64,
    n_small: usize,
    n_large: usize,
    spec: &GridSpec,
) -> Result<GalerkinGap> {
    if !(n_small < n_large) {
        return Err(Error::param("n_small", "must be smaller than n_large"));
    }
    let modes = solve_modes(model, b, lambda, n_large, spec)?;
    modes.gap(n_small, n_large, probe_radius(spec))
}

/// Largest ball radius whose probes stay inside the per-mode box.
pub fn probe_radius(spec: &GridSpec) -> f64 {
    spec.axes.iter().map(|a| a.hi.min(-a.lo)).fold(f64::INFINITY, f64::min).max(0.0) * 0.9
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::drift::ModeSeparable;
    use crate::linalg::Mat;

    fn wave4() -> SpectralModel {
        let eig: Vec<f64> = (1..=4).map(|i| (i as f64).powf(1.5)).collect();
        SpectralModel::spectral(eig, Sigma::Constant(Mat::identity(4, 4)), 0.3, TailRule::None).unwrap()
    }

    fn separable(coeffs: Vec<f64>) -> DriftSpec {
        let cc = coeffs.clone();
        let g: crate::model::drift::ModeProfile = Arc::new(|_, x, y| (x + y).sin());
        let gg = g.clone();
        let mut b = DriftSpec::new("sep", 4, 4, Arc::new(move |t, z: &[f64], out: &mut [f64]| {
            for i in 0..4 {
                out[i] = cc[i] * gg(t, z[i], z[4 + i]);
            }
        }));
        b.modewise = Some(ModeSeparable { coeffs, profile: g });
        b
    }

    #[test]
    fn drift_on_leading_modes_has_zero_gap() {
        let spec = GridSpec::uniform(2, -3.0, 3.0, 17, 9, 1.0);
        let b = separable(vec![1.0, 0.5, 0.0, 0.0]);
        let gap = galerkin_compare(&wave4(), &b, 32.0, 2, 4, &spec).unwrap();
        assert_eq!(gap.value_gap, 0.0);
        assert_eq!(gap.grad_gap, 0.0);
    }

    #[test]
    fn gaps_shrink_with_more_modes_and_larger_lambda() {
        let spec = GridSpec::uniform(2, -3.0, 3.0, 17, 9, 1.0);
        let b = separable(vec![1.0, 0.5, 0.3, 0.2]);
        let modes = solve_modes(&wave4(), &b, 32.0, 4, &spec).unwrap();
        let r = probe_radius(&spec);
        let g1 = modes.gap(1, 4, r).unwrap();
        let g2 = modes.gap(2, 4, r).unwrap();
        assert!(g2.value_gap < g1.value_gap && g2.grad_gap < g1.grad_gap);
        let modes2 = solve_modes(&wave4(), &b, 64.0, 4, &spec).unwrap();
        let h2 = modes2.gap(2, 4, r).unwrap();
        assert!(h2.value_gap < g2.value_gap);
    }

    #[test]
    fn non_separable_drift_is_rejected() {
        let spec = GridSpec::uniform(2, -3.0, 3.0, 9, 3, 1.0);
        let b = DriftSpec::zero(4, 4);
        assert!(matches!(galerkin_compare(&wave4(), &b, 16.0, 2, 4, &spec), Err(Error::Capability(_))));
    }
}
