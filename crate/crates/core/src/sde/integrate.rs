//! Exponential-Euler integration of the mild formulation with recorded noise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::linear_flow::{flow_blocks, LinearStepper, PathBundle};
use crate::model::{DriftSpec, SpectralModel};
use crate::rng::{path_rng, substream};

/// States with `|Z| > BLOW_UP` end the trajectory.
pub const BLOW_UP: f64 = 1e8;

const GRID_TOL: f64 = 1e-12;

/// Brownian increments and exact stochastic-convolution increments on a
/// uniform grid over `[0, T]`, step-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedNoise {
    pub times: Vec<f64>,
    pub k: usize,
    pub dim: usize,
    /// `[step][k]`.
    pub dw: Vec<f64>,
    /// `[step][dim]`: `∫ e^{(t_{i+1}-r)𝔸} G_r dW_r` over step `i`.
    pub conv: Vec<f64>,
}

impl RecordedNoise {
    /// Draws the noise of path `index` in the stream `sde.integrate_mild`.
    pub fn generate(model: &SpectralModel, horizon: f64, n_steps: usize, seed: u64, index: u64) -> Result<Self> {
        let stepper = LinearStepper::new(model, 0.0, horizon, n_steps)?;
        let (dim, k) = (model.dim(), model.k());
        let mut rng = path_rng(substream(seed, "sde.integrate_mild"), index);
        let mut dw = vec![0.0; n_steps * k];
        let mut conv = vec![0.0; n_steps * dim];
        for step in 0..n_steps {
            stepper
                .kernel(step)
                .draw(&mut rng, &mut dw[step * k..(step + 1) * k], &mut conv[step * dim..(step + 1) * dim]);
        }
        Ok(RecordedNoise { times: stepper.times, k, dim, dw, conv })
    }

    /// The noise of one path of a bundle; the bundle must start at time 0.
    pub fn from_bundle(bundle: &PathBundle, path: usize) -> Result<Self> {
        if path >= bundle.n_paths {
            return Err(Error::param("path", format!("bundle has {} paths", bundle.n_paths)));
        }
        if bundle.times[0].abs() > GRID_TOL {
            return Err(Error::param("noise", "bundle must start at t = 0"));
        }
        Ok(RecordedNoise {
            times: bundle.times.clone(),
            k: bundle.k,
            dim: bundle.dim(),
            dw: bundle.increments(path).to_vec(),
            conv: bundle.convolutions(path).to_vec(),
        })
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.n_steps()]
    }

    pub fn dw_at(&self, step: usize) -> &[f64] {
        &self.dw[step * self.k..(step + 1) * self.k]
    }

    pub fn conv_at(&self, step: usize) -> &[f64] {
        &self.conv[step * self.dim..(step + 1) * self.dim]
    }

    /// The same Brownian path seen on a grid `factor` times coarser. The
    /// convolution increments compose exactly: `ζ = F_h ζ₁ + ζ₂`.
    pub fn coarsen(&self, model: &SpectralModel, factor: usize) -> Result<Self> {
        let n = self.n_steps();
        if factor == 0 || !n.is_multiple_of(factor) {
            return Err(Error::param("factor", format!("must divide the step count {n}")));
        }
        if model.dim() != self.dim || model.k() != self.k {
            return Err(Error::param("model", "dimensions do not match the recorded noise"));
        }
        let h = self.times[1] - self.times[0];
        let f = flow_blocks(model, h, &Mat::zeros(model.d(), model.k())).f;
        let (dim, k) = (self.dim, self.k);
        let nc = n / factor;
        let mut dw = vec![0.0; nc * k];
        let mut conv = vec![0.0; nc * dim];
        let mut tmp = vec![0.0; dim];
        for c in 0..nc {
            let acc = &mut conv[c * dim..(c + 1) * dim];
            for j in 0..factor {
                let step = c * factor + j;
                for i in 0..dim {
                    tmp[i] = (0..dim).map(|l| f[(i, l)] * acc[l]).sum::<f64>() + self.conv_at(step)[i];
                }
                acc.copy_from_slice(&tmp);
                for (w, x) in dw[c * k..(c + 1) * k].iter_mut().zip(self.dw_at(step)) {
                    *w += x;
                }
            }
        }
        let times = (0..=nc).map(|c| self.times[c * factor]).collect();
        Ok(RecordedNoise { times, k, dim, dw, conv })
    }
}

/// Where the driving noise of `integrate_mild` comes from.
#[derive(Debug, Clone, Copy)]
pub enum Noise<'a> {
    /// Fresh noise for path `index` of the seeded stream.
    Seed { seed: u64, index: u64 },
    Recorded(&'a RecordedNoise),
    Bundle { bundle: &'a PathBundle, path: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    pub step: usize,
    pub time: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MildTrajectory {
    pub m: usize,
    pub d: usize,
    /// `[step][m + d]`, up to and including the blow-up state if any.
    pub states: Vec<f64>,
    pub noise: RecordedNoise,
    pub blow_up: Option<BlowUp>,
}

impl MildTrajectory {
    pub fn dim(&self) -> usize {
        self.m + self.d
    }

    pub fn times(&self) -> &[f64] {
        &self.noise.times
    }

    pub fn n_steps(&self) -> usize {
        self.noise.n_steps()
    }

    /// Number of stored states.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        let dim = self.dim();
        &self.states[i * dim..(i + 1) * dim]
    }

    /// Terminal state, `None` after a blow-up.
    pub fn terminal(&self) -> Option<&[f64]> {
        self.blow_up.is_none().then(|| self.state(self.n_steps()))
    }

    pub const CSV_HEADER: &'static str = "step,t,component,value";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for i in 0..self.len() {
            for (c, v) in self.state(i).iter().enumerate() {
                out.push_str(&format!("{i},{},{c},{v}\n", self.times()[i]));
            }
        }
        out
    }
}

/// `Z_{k+1} = F Z_k + Gint [0; b(t_k, Z_k)] + ζ_k` on `n_steps` uniform steps
/// over `[0, T]`. Blow-up is recorded, not raised.
pub fn integrate_mild(
    model: &SpectralModel,
    b: &DriftSpec,
    z0: &[f64],
    horizon: f64,
    n_steps: usize,
    noise: Noise<'_>,
) -> Result<MildTrajectory> {
    if n_steps == 0 {
        return Err(Error::param("n_steps", "must be at least 1"));
    }
    let (m, d, dim) = (model.m(), model.d(), model.dim());
    if z0.len() != dim {
        return Err(Error::param("z0", format!("expected length {dim}")));
    }
    if b.m != m || b.d != d {
        return Err(Error::param("b", format!("drift is {}+{}, model is {m}+{d}", b.m, b.d)));
    }
    let noise = match noise {
        Noise::Seed { seed, index } => RecordedNoise::generate(model, horizon, n_steps, seed, index)?,
        Noise::Recorded(r) => r.clone(),
        Noise::Bundle { bundle, path } => RecordedNoise::from_bundle(bundle, path)?,
    };
    if noise.n_steps() != n_steps || (noise.horizon() - horizon).abs() > GRID_TOL * horizon.max(1.0) {
        return Err(Error::param("noise", format!("recorded grid does not match {n_steps} steps over [0, {horizon}]")));
    }
    if noise.dim != dim || noise.k != model.k() {
        return Err(Error::param("noise", "dimensions do not match the model"));
    }
    let stepper = LinearStepper::new(model, 0.0, horizon, n_steps)?;
    let mut states = Vec::with_capacity((n_steps + 1) * dim);
    states.extend_from_slice(z0);
    let mut cur = z0.to_vec();
    let mut next = vec![0.0; dim];
    let mut bv = vec![0.0; d];
    let mut blow_up = None;
    for step in 0..n_steps {
        let ker = stepper.kernel(step);
        b.eval_into(noise.times[step], &cur, &mut bv);
        ker.advance(&cur, noise.conv_at(step), &mut next);
        for i in 0..dim {
            next[i] += (0..d).map(|j| ker.gint[(i, m + j)] * bv[j]).sum::<f64>();
        }
        states.extend_from_slice(&next);
        let norm = crate::linalg::norm(&next);
        if !(norm <= BLOW_UP) {
            blow_up = Some(BlowUp { step: step + 1, time: noise.times[step + 1], norm });
            break;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(MildTrajectory { m, d, states, noise, blow_up })
}

/// Trajectories for paths `0..n_paths` of the seeded stream.
pub fn integrate_paths(
    model: &SpectralModel,
    b: &DriftSpec,
    z0: &[f64],
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<MildTrajectory>> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|index| integrate_mild(model, b, z0, horizon, n_steps, Noise::Seed { seed, index }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub n_steps: Vec<usize>,
    /// Root-mean-square terminal error against the reference, per step count.
    pub errors: Vec<f64>,
    pub reference_steps: usize,
    pub n_paths: usize,
    /// Paths excluded because a trajectory blew up.
    pub blow_ups: usize,
}

impl ConvergenceStudy {
    pub const CSV_HEADER: &'static str = "n_steps,rms_error";

    pub fn csv_rows(&self) -> Vec<String> {
        self.n_steps.iter().zip(&self.errors).map(|(n, e)| format!("{n},{e}")).collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }
}

/// Terminal strong error at `base, 2 base, …, 2^{levels-1} base` steps against
/// a reference `refine` times finer than the finest level, all driven by the
/// same Brownian paths.
#[allow(clippy::too_many_arguments)]
pub fn self_convergence(
    model: &SpectralModel,
    b: &DriftSpec,
    z0: &[f64],
    horizon: f64,
    base: usize,
    levels: usize,
    refine: usize,
    n_paths: usize,
    seed: u64,
) -> Result<ConvergenceStudy> {
    if base == 0 || levels == 0 || refine == 0 || n_paths == 0 {
        return Err(Error::param("levels", "base, levels, refine and n_paths must be positive"));
    }
    let n_steps: Vec<usize> = (0..levels).map(|l| base << l).collect();
    let n_ref = n_steps[levels - 1] * refine;
    let per_path: Vec<Option<Vec<f64>>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|index| -> Result<Option<Vec<f64>>> {
            let fine = RecordedNoise::generate(model, horizon, n_ref, seed, index)?;
            let reference = integrate_mild(model, b, z0, horizon, n_ref, Noise::Recorded(&fine))?;
            let Some(z_ref) = reference.terminal() else { return Ok(None) };
            let mut errs = Vec::with_capacity(levels);
            for &n in &n_steps {
                let coarse = fine.coarsen(model, n_ref / n)?;
                let traj = integrate_mild(model, b, z0, horizon, n, Noise::Recorded(&coarse))?;
                let Some(z) = traj.terminal() else { return Ok(None) };
                errs.push(z.iter().zip(z_ref).map(|(a, r)| (a - r).powi(2)).sum::<f64>());
            }
            Ok(Some(errs))
        })
        .collect::<Result<_>>()?;
    let ok: Vec<&Vec<f64>> = per_path.iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::Numerical("every path blew up".into()));
    }
    let errors = (0..levels)
        .map(|l| (ok.iter().map(|e| e[l]).sum::<f64>() / ok.len() as f64).sqrt())
        .collect();
    Ok(ConvergenceStudy { n_steps, errors, reference_steps: n_ref, n_paths, blow_ups: n_paths - ok.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_flow::{sample_linear, transition_law};
    use crate::model::{Sigma, TailRule};
    use std::sync::Arc;

    #[test]
    fn zero_noise_zero_drift_follows_the_linear_flow() {
        let model = SpectralModel::spectral(vec![0.7], Sigma::Constant(Mat::identity(1, 1)), 0.5, TailRule::None).unwrap();
        let mut noise = RecordedNoise::generate(&model, 1.0, 8, 1, 0).unwrap();
        noise.dw.fill(0.0);
        noise.conv.fill(0.0);
        let b = DriftSpec::zero(1, 1);
        let traj = integrate_mild(&model, &b, &[0.4, -1.1], 1.0, 8, Noise::Recorded(&noise)).unwrap();
        for i in 1..=8 {
            let law = transition_law(&model, 0.0, noise.times[i], &[0.4, -1.1]).unwrap();
            for c in 0..2 {
                assert!((traj.state(i)[c] - law.mean[c]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn bundle_noise_reproduces_linear_paths_bitwise() {
        let model = SpectralModel::kinetic_scalar();
        let bundle = sample_linear(&model, 0.0, 1.0, &[0.2, 0.3], 3, 16, 9).unwrap();
        let b = DriftSpec::zero(1, 1);
        for p in 0..3 {
            let traj = integrate_mild(&model, &b, &[0.2, 0.3], 1.0, 16, Noise::Bundle { bundle: &bundle, path: p }).unwrap();
            for i in 0..=16 {
                assert_eq!(traj.state(i), bundle.state(p, i));
            }
        }
    }

    #[test]
    fn recorded_noise_is_deterministic() {
        let model = SpectralModel::kinetic_scalar();
        let b = DriftSpec::new("sin", 1, 1, Arc::new(|_, z: &[f64], o: &mut [f64]| o[0] = z[0].sin() - z[1]));
        let a = integrate_mild(&model, &b, &[0.0, 0.0], 1.0, 64, Noise::Seed { seed: 3, index: 5 }).unwrap();
        let c = integrate_mild(&model, &b, &[0.0, 0.0], 1.0, 64, Noise::Recorded(&a.noise)).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn coarsening_matches_direct_linear_paths() {
        let model = SpectralModel::kinetic_scalar();
        let fine = RecordedNoise::generate(&model, 1.0, 32, 4, 0).unwrap();
        let coarse = fine.coarsen(&model, 4).unwrap();
        let b = DriftSpec::zero(1, 1);
        let f = integrate_mild(&model, &b, &[0.1, 0.2], 1.0, 32, Noise::Recorded(&fine)).unwrap();
        let c = integrate_mild(&model, &b, &[0.1, 0.2], 1.0, 8, Noise::Recorded(&coarse)).unwrap();
        for i in 0..=8 {
            for j in 0..2 {
                assert!((f.state(4 * i)[j] - c.state(i)[j]).abs() < 1e-13);
            }
        }
        assert!(fine.coarsen(&model, 3).is_err());
    }

    #[test]
    fn explosive_drift_records_blow_up() {
        let model = SpectralModel::kinetic_scalar();
        let b = DriftSpec::new("cube", 1, 1, Arc::new(|_, z: &[f64], o: &mut [f64]| o[0] = z[1].powi(3)));
        let traj = integrate_mild(&model, &b, &[0.0, 3.0], 1.0, 64, Noise::Seed { seed: 1, index: 0 }).unwrap();
        let bu = traj.blow_up.expect("blow-up");
        assert_eq!(traj.len(), bu.step + 1);
        for i in 0..bu.step {
            assert!(crate::linalg::norm(traj.state(i)) < BLOW_UP);
        }
        assert!(traj.terminal().is_none());
    }

    #[test]
    fn lipschitz_drift_converges_at_order_one() {
        let model = SpectralModel::kinetic_scalar();
        let b = DriftSpec::new("sin", 1, 1, Arc::new(|_, z: &[f64], o: &mut [f64]| o[0] = z[0].sin() + (2.0 * z[1]).cos()));
        let study = self_convergence(&model, &b, &[0.3, 0.1], 1.0, 16, 4, 8, 200, 11).unwrap();
        assert!(study.is_monotone(), "{:?}", study.errors);
        let slope = crate::stats::log_log_slope(&study.n_steps.iter().map(|&n| n as f64).collect::<Vec<_>>(), &study.errors);
        assert!(slope < -0.8, "slope {slope}");
    }
}
