//! Residual of the representation of `Y` through the regularization field:
//!
//! `Y_t = e^{tA2}(Y_0 + u_0(Z_0)) - u_t(Z_t) + ∫_0^t (λ - A2) e^{(t-s)A2} u_s(Z_s) ds
//!        + ∫_0^t e^{(t-s)A2} {σ_s dW_s + ∇^{(2)}_{σ_s dW_s} u_s(Z_s)}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrate::{integrate_mild, MildTrajectory, Noise, RecordedNoise};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{DriftSpec, SpectralModel};
use crate::regularization::{field_grad2, FieldGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub times: Vec<f64>,
    /// `|LHS - RHS|` at each grid time.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

fn coverage_check(field: &FieldGrid, traj: &MildTrajectory) -> Result<()> {
    let (lo, hi) = (field.lo(), field.hi());
    for i in 0..traj.len() {
        let z = traj.state(i);
        for (a, &v) in z.iter().enumerate() {
            if !(v >= lo[a] && v <= hi[a]) {
                return Err(Error::Coverage { time: traj.times()[i], axis: a, value: v });
            }
        }
    }
    Ok(())
}

/// Both sides of the representation along `traj`. The Lebesgue integral uses
/// the trapezoid rule on the trajectory grid, the `∇u` stochastic integral
/// left-point sums with the recorded increments, and the `σ dW` convolution
/// the recorded exact convolution increments.
pub fn representation_residual(
    model: &SpectralModel,
    traj: &MildTrajectory,
    field: &FieldGrid,
    lambda: f64,
) -> Result<ResidualReport> {
    let (m, d) = (model.m(), model.d());
    if traj.m != m || traj.d != d || field.m != m || field.d != d {
        return Err(Error::param("field", "trajectory, field and model dimensions differ"));
    }
    if traj.blow_up.is_some() {
        return Err(Error::Domain("trajectory blew up".into()));
    }
    let times = traj.times().to_vec();
    let n = traj.n_steps();
    if times[n] > field.horizon() * (1.0 + 1e-12) {
        return Err(Error::param("field", format!("field horizon {} is shorter than the trajectory", field.horizon())));
    }
    coverage_check(field, traj)?;
    let h = times[1] - times[0];
    let e = linalg::expm_scaled(&model.a2, h);
    let gen = Mat::identity(d, d) * lambda - &model.a2;
    let noise = &traj.noise;

    let y = |i: usize| Vector::from_column_slice(&traj.state(i)[m..]);
    let u = |i: usize| Vector::from_vec(field.eval(times[i], traj.state(i)));

    let mut u_cur = u(0);
    let mut free = y(0) + &u_cur;
    let mut leb = Vector::zeros(d);
    let mut stoch = Vector::zeros(d);
    let mut conv = Vector::zeros(d);
    let mut residuals = Vec::with_capacity(n + 1);
    residuals.push(0.0);
    for i in 0..n {
        let sigma = model.sigma.at(times[i]);
        let dw = Vector::from_column_slice(noise.dw_at(i));
        let jac = field_grad2(field, times[i], traj.state(i))?.jacobian;
        let u_next = u(i + 1);
        free = &e * free;
        leb = &e * (leb + &gen * &u_cur * (0.5 * h)) + &gen * &u_next * (0.5 * h);
        stoch = &e * (stoch + jac * (&sigma * &dw));
        conv = &e * conv + Vector::from_column_slice(&noise.conv_at(i)[m..]);
        let rhs = &free - &u_next + &leb + &conv + &stoch;
        residuals.push((y(i + 1) - rhs).norm());
        u_cur = u_next;
    }
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    Ok(ResidualReport { times, residuals, max_residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSweep {
    pub n_steps: Vec<usize>,
    /// Root mean square over paths of the per-path max residual.
    pub max_residuals: Vec<f64>,
    pub n_paths: usize,
}

impl ResidualSweep {
    pub const CSV_HEADER: &'static str = "n_steps,max_residual";

    pub fn csv_rows(&self) -> Vec<String> {
        self.n_steps.iter().zip(&self.max_residuals).map(|(n, r)| format!("{n},{r}")).collect()
    }

    /// Smallest ratio of successive residuals.
    pub fn min_ratio(&self) -> f64 {
        self.max_residuals.windows(2).map(|w| w[0] / w[1]).fold(f64::INFINITY, f64::min)
    }
}

/// Residuals for each step count. Path `p` is sampled on the finest grid and
/// coarsened exactly, so every step count sees the same Brownian paths.
#[allow(clippy::too_many_arguments)]
pub fn residual_sweep(
    model: &SpectralModel,
    b: &DriftSpec,
    field: &FieldGrid,
    lambda: f64,
    z0: &[f64],
    horizon: f64,
    n_steps: &[usize],
    n_paths: usize,
    seed: u64,
) -> Result<ResidualSweep> {
    let n_max = *n_steps.iter().max().ok_or_else(|| Error::param("n_steps", "must not be empty"))?;
    if n_paths == 0 {
        return Err(Error::param("n_paths", "must be at least 1"));
    }
    if let Some(&n) = n_steps.iter().find(|&&n| n == 0 || n_max % n != 0) {
        return Err(Error::param("n_steps", format!("{n} does not divide {n_max}")));
    }
    let per_path: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|index| {
            let fine = RecordedNoise::generate(model, horizon, n_max, seed, index)?;
            n_steps
                .iter()
                .map(|&n| {
                    let noise = fine.coarsen(model, n_max / n)?;
                    let traj = integrate_mild(model, b, z0, horizon, n, Noise::Recorded(&noise))?;
                    Ok(representation_residual(model, &traj, field, lambda)?.max_residual)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let max_residuals = (0..n_steps.len())
        .map(|l| (per_path.iter().map(|r| r[l] * r[l]).sum::<f64>() / n_paths as f64).sqrt())
        .collect();
    Ok(ResidualSweep { n_steps: n_steps.to_vec(), max_residuals, n_paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Sigma, TailRule};
    use crate::regularization::{picard_solve, GridSpec};

    #[test]
    fn zero_drift_residual_is_rounding() {
        let model = SpectralModel::spectral(vec![0.8], Sigma::Constant(Mat::identity(1, 1)), 0.5, TailRule::None).unwrap();
        let spec = GridSpec::uniform(2, -8.0, 8.0, 9, 3, 1.0);
        let field = FieldGrid::zeros(&spec, 1, 1).unwrap();
        let b = DriftSpec::zero(1, 1);
        let traj = integrate_mild(&model, &b, &[0.2, 0.1], 1.0, 128, Noise::Seed { seed: 2, index: 0 }).unwrap();
        let r = representation_residual(&model, &traj, &field, 10.0).unwrap();
        assert!(r.max_residual <= 1e-12, "{}", r.max_residual);
    }

    #[test]
    fn constant_drift_residual_decays() {
        let model = SpectralModel::kinetic_scalar();
        let b = DriftSpec::constant(1, vec![0.7]);
        let lambda = 8.0;
        let spec = GridSpec::uniform(2, -8.0, 8.0, 9, 257, 1.0);
        let (field, _) = picard_solve(&model, &b, lambda, &spec, 1e-12, 100).unwrap();
        let sweep = residual_sweep(&model, &b, &field, lambda, &[0.0, 0.0], 1.0, &[32, 64, 128, 256], 4, 3).unwrap();
        assert!(sweep.min_ratio() >= 1.3, "{:?}", sweep.max_residuals);
    }

    #[test]
    fn leaving_the_box_names_the_time() {
        let model = SpectralModel::kinetic_scalar();
        let spec = GridSpec::uniform(2, -0.05, 0.05, 5, 3, 1.0);
        let field = FieldGrid::zeros(&spec, 1, 1).unwrap();
        let b = DriftSpec::zero(1, 1);
        let traj = integrate_mild(&model, &b, &[0.0, 0.0], 1.0, 64, Noise::Seed { seed: 2, index: 0 }).unwrap();
        match representation_residual(&model, &traj, &field, 1.0) {
            Err(Error::Coverage { time, .. }) => assert!(time > 0.0 && time <= 1.0),
            other => panic!("{other:?}"),
        }
    }
}
