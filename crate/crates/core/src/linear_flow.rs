//! Exact Gaussian law and simulation of the linear system
//! `dX = (A1 X + B Y) dt`, `dY = A2 Y dt + σ dW`.
//!
//! Every step of a simulated path draws the Brownian increment `ΔW` and the
//! stochastic convolution `ζ = ∫ e^{(t_{k+1}-r)𝔸} [0; σ_r] dW_r` jointly, so the
//! path is exact in law at the grid times and the increments can be reused by
//! estimators and by the nonlinear integrator.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{Sigma, SpectralModel};
use crate::quad;
use crate::rng::{path_rng, substream};
use crate::stats::{log_log_slope, Estimate};

/// Relative eigenvalue cutoff for covariance square roots.
pub const PSD_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub mean: Vector,
    pub cov: Mat,
}

impl GaussianLaw {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Asymmetry and most negative eigenvalue of the covariance.
    pub fn psd_defects(&self) -> (f64, f64) {
        let asym = linalg::max_abs_diff(&self.cov, &self.cov.transpose());
        let min_ev = linalg::sym_eigenvalues(&self.cov).first().copied().unwrap_or(0.0);
        (asym, min_ev)
    }

    /// Pushes the law through `z ↦ F z + c` and adds independent noise `Q`.
    pub fn push_forward(&self, f: &Mat, q: &Mat) -> GaussianLaw {
        GaussianLaw { mean: f * &self.mean, cov: linalg::symmetrize(&(f * &self.cov * f.transpose() + q)) }
    }
}

/// `∫_0^h u^p e^{-a u} du` for `p = 0, 1, 2`.
fn exp_moments(a: f64, h: f64) -> [f64; 3] {
    let x = a * h;
    if x.abs() < 0.5 {
        let mut out = [0.0; 3];
        for (p, o) in out.iter_mut().enumerate() {
            let mut term = h.powi(p as i32 + 1);
            let mut sum = 0.0;
            for n in 0..30 {
                sum += term / (n + p + 1) as f64;
                term *= -x / (n + 1) as f64;
            }
            *o = sum;
        }
        return out;
    }
    let e = (-x).exp();
    [
        (1.0 - e) / a,
        (1.0 - e * (1.0 + x)) / (a * a),
        (2.0 - e * (2.0 + 2.0 * x + x * x)) / (a * a * a),
    ]
}

/// Flow quantities over one interval of length `h` with constant noise input `G`:
/// `F = e^{h𝔸}`, `Gint = ∫_0^h e^{u𝔸} du`, `Σ_ZZ = ∫_0^h e^{u𝔸} G G^T e^{u𝔸^T} du`,
/// `Σ_ZW = ∫_0^h e^{u𝔸} G du`.
#[derive(Debug, Clone)]
pub struct FlowBlocks {
    pub f: Mat,
    pub gint: Mat,
    pub szz: Mat,
    pub szw: Mat,
}

fn is_diagonal_spectral(model: &SpectralModel) -> bool {
    model.is_spectral()
        && linalg::is_diagonal(&model.a1)
        && model.a1 == model.a2
        && model.b == Mat::identity(model.m(), model.d())
}

/// Flow blocks for constant `σ`. Spectral-family models (`A1 = A2` diagonal,
/// `B = I`) decouple into `2×2` Jordan blocks per mode and use closed forms;
/// other models use the augmented-exponential constructions.
pub fn flow_blocks(model: &SpectralModel, h: f64, sigma: &Mat) -> FlowBlocks {
    let dim = model.dim();
    let k = sigma.ncols();
    if is_diagonal_spectral(model) {
        let n = model.d();
        let lam: Vec<f64> = (0..n).map(|i| -model.a2[(i, i)]).collect();
        let mut f = Mat::zeros(dim, dim);
        let mut gint = Mat::zeros(dim, dim);
        let mut szw = Mat::zeros(dim, k);
        let mut szz = Mat::zeros(dim, dim);
        let nn = sigma * sigma.transpose();
        for i in 0..n {
            let e = (-lam[i] * h).exp();
            f[(i, i)] = e;
            f[(i, n + i)] = h * e;
            f[(n + i, n + i)] = e;
            let [i0, i1, _] = exp_moments(lam[i], h);
            gint[(i, i)] = i0;
            gint[(i, n + i)] = i1;
            gint[(n + i, n + i)] = i0;
            for c in 0..k {
                szw[(i, c)] = i1 * sigma[(i, c)];
                szw[(n + i, c)] = i0 * sigma[(i, c)];
            }
            for j in 0..n {
                if nn[(i, j)] == 0.0 {
                    continue;
                }
                let [j0, j1, j2] = exp_moments(lam[i] + lam[j], h);
                let c = nn[(i, j)];
                szz[(i, j)] = c * j2;
                szz[(i, n + j)] = c * j1;
                szz[(n + i, j)] = c * j1;
                szz[(n + i, n + j)] = c * j0;
            }
        }
        return FlowBlocks { f, gint, szz, szw };
    }
    let a = model.generator();
    let m = model.m();
    let mut g = Mat::zeros(dim, k);
    g.view_mut((m, 0), (model.d(), k)).copy_from(sigma);
    let gint = linalg::integrated_expm(&a, h);
    let szw = &gint * &g;
    FlowBlocks { f: linalg::expm_scaled(&a, h), szz: linalg::van_loan_covariance(&a, &(&g * g.transpose()), h), szw, gint }
}

/// `∫_s^t e^{(t-r)𝔸} G_r G_r^T e^{(t-r)𝔸^T} dr` by adaptive Gauss–Kronrod.
pub fn covariance_by_quadrature(model: &SpectralModel, s: f64, t: f64) -> Mat {
    let a = model.generator();
    let dim = model.dim();
    let (v, _) = quad::adaptive_vec(
        |r| {
            let e = linalg::expm_scaled(&a, t - r);
            let g = model.noise_input(r);
            let m = &e * &g * g.transpose() * e.transpose();
            m.iter().copied().collect()
        },
        s,
        t,
        1e-13,
        1e-11,
        2000,
    );
    linalg::symmetrize(&Mat::from_column_slice(dim, dim, &v))
}

/// Law of `Z⁰_{s,t}(z)`.
pub fn transition_law(model: &SpectralModel, s: f64, t: f64, z: &[f64]) -> Result<GaussianLaw> {
    if !(t > s) {
        return Err(Error::Domain(format!("transition_law needs t > s (s = {s}, t = {t})")));
    }
    if z.len() != model.dim() {
        return Err(Error::param("z", format!("expected length {}", model.dim())));
    }
    let zv = Vector::from_column_slice(z);
    match &model.sigma {
        Sigma::Constant(sig) => {
            let fb = flow_blocks(model, t - s, sig);
            Ok(GaussianLaw { mean: &fb.f * zv, cov: linalg::symmetrize(&fb.szz) })
        }
        Sigma::TimeDependent { .. } => {
            let f = flow_blocks(model, t - s, &Mat::zeros(model.d(), model.k())).f;
            Ok(GaussianLaw { mean: f * zv, cov: covariance_by_quadrature(model, s, t) })
        }
    }
}

/// Exact one-step kernel of the linear flow: `Z_{k+1} = F Z_k + ζ_k`, with
/// `ΔW = √h ξ₁` and `ζ = (Σ_ZW/h) ΔW + L ξ₂`, `L L^T = Σ_ZZ - Σ_ZW Σ_ZW^T / h`.
#[derive(Debug, Clone)]
pub struct StepKernel {
    pub h: f64,
    pub f: Mat,
    /// `∫_0^h e^{u𝔸} du`, used for frozen-drift increments.
    pub gint: Mat,
    proj: Mat,
    resid: Mat,
    sqrt_h: f64,
}

impl StepKernel {
    pub fn new(model: &SpectralModel, t0: f64, h: f64) -> StepKernel {
        let (szz, szw, f, gint) = match &model.sigma {
            Sigma::Constant(sig) => {
                let fb = flow_blocks(model, h, sig);
                (fb.szz, fb.szw, fb.f, fb.gint)
            }
            Sigma::TimeDependent { .. } => {
                let fb = flow_blocks(model, h, &Mat::zeros(model.d(), model.k()));
                let a = model.generator();
                let (dim, k) = (model.dim(), model.k());
                let t1 = t0 + h;
                let (v, _) = quad::adaptive_vec(
                    |u| {
                        let e = linalg::expm_scaled(&a, u);
                        let eg = &e * model.noise_input(t1 - u);
                        let zz = &eg * eg.transpose();
                        zz.iter().chain(eg.iter()).copied().collect()
                    },
                    0.0,
                    h,
                    1e-14,
                    1e-11,
                    2000,
                );
                let szz = Mat::from_column_slice(dim, dim, &v[..dim * dim]);
                let szw = Mat::from_column_slice(dim, k, &v[dim * dim..]);
                (szz, szw, fb.f, fb.gint)
            }
        };
        let resid = linalg::psd_factor(&linalg::symmetrize(&(&szz - &szw * szw.transpose() / h)), PSD_CUTOFF);
        StepKernel { h, f, gint, proj: szw / h, resid, sqrt_h: h.sqrt() }
    }

    /// Draws `(ΔW, ζ)` for one step.
    pub fn draw(&self, rng: &mut impl Rng, dw: &mut [f64], conv: &mut [f64]) {
        for w in dw.iter_mut() {
            *w = self.sqrt_h * rng.sample::<f64, _>(StandardNormal);
        }
        let dim = conv.len();
        conv.fill(0.0);
        for (c, w) in dw.iter().enumerate() {
            for i in 0..dim {
                conv[i] += self.proj[(i, c)] * w;
            }
        }
        for j in 0..dim {
            let xi: f64 = rng.sample(StandardNormal);
            for i in 0..dim {
                conv[i] += self.resid[(i, j)] * xi;
            }
        }
    }

    /// `out = F z + conv`.
    pub fn advance(&self, z: &[f64], conv: &[f64], out: &mut [f64]) {
        let dim = z.len();
        for i in 0..dim {
            let mut acc = conv[i];
            for j in 0..dim {
                acc += self.f[(i, j)] * z[j];
            }
            out[i] = acc;
        }
    }
}

/// Uniform time grid on `[s, t]` with one kernel per step (a single shared
/// kernel when `σ` is constant).
#[derive(Debug, Clone)]
pub struct LinearStepper {
    pub times: Vec<f64>,
    kernels: Vec<StepKernel>,
    pub dim: usize,
    pub k: usize,
}

impl LinearStepper {
    pub fn new(model: &SpectralModel, s: f64, t: f64, n_steps: usize) -> Result<Self> {
        if !(t > s) {
            return Err(Error::Domain(format!("need t > s (s = {s}, t = {t})")));
        }
        if n_steps == 0 {
            return Err(Error::param("n_steps", "must be at least 1"));
        }
        let h = (t - s) / n_steps as f64;
        let times: Vec<f64> = (0..=n_steps).map(|i| if i == n_steps { t } else { s + i as f64 * h }).collect();
        let kernels = if model.sigma.is_constant() {
            vec![StepKernel::new(model, s, h)]
        } else {
            (0..n_steps).map(|i| StepKernel::new(model, times[i], h)).collect()
        };
        Ok(LinearStepper { times, kernels, dim: model.dim(), k: model.k() })
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn h(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn kernel(&self, step: usize) -> &StepKernel {
        if self.kernels.len() == 1 {
            &self.kernels[0]
        } else {
            &self.kernels[step]
        }
    }

    /// Runs one path from `z` without storing it; `on_step(step, state, dw)`
    /// sees the state at the left end of each step and that step's increment.
    /// Returns the terminal state.
    pub fn run(&self, z: &[f64], rng: &mut impl Rng, mut on_step: impl FnMut(usize, &[f64], &[f64])) -> Vec<f64> {
        let mut cur = z.to_vec();
        let mut next = vec![0.0; self.dim];
        let mut dw = vec![0.0; self.k];
        let mut conv = vec![0.0; self.dim];
        for step in 0..self.n_steps() {
            let ker = self.kernel(step);
            ker.draw(rng, &mut dw, &mut conv);
            on_step(step, &cur, &dw);
            ker.advance(&cur, &conv, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Simulates one path from `z`, writing states (`(N+1)·dim`), increments
    /// (`N·k`) and convolution noise (`N·dim`).
    pub fn simulate(&self, z: &[f64], rng: &mut impl Rng, states: &mut [f64], dw: &mut [f64], conv: &mut [f64]) {
        let (dim, k) = (self.dim, self.k);
        states[..dim].copy_from_slice(z);
        for step in 0..self.n_steps() {
            let ker = self.kernel(step);
            ker.draw(rng, &mut dw[step * k..(step + 1) * k], &mut conv[step * dim..(step + 1) * dim]);
            let (head, tail) = states.split_at_mut((step + 1) * dim);
            ker.advance(&head[step * dim..], &conv[step * dim..(step + 1) * dim], &mut tail[..dim]);
        }
    }
}

/// Simulated linear paths with their recorded noise. Arrays are path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub m: usize,
    pub d: usize,
    pub k: usize,
    /// `[path][time][state]`, length `n_paths·(N+1)·(m+d)`.
    pub states: Vec<f64>,
    /// `[path][step][k]` Brownian increments.
    pub dw: Vec<f64>,
    /// `[path][step][m+d]` stochastic-convolution increments.
    pub conv: Vec<f64>,
    pub seed: u64,
    pub stream: String,
}

impl PathBundle {
    pub fn dim(&self) -> usize {
        self.m + self.d
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        let dim = self.dim();
        let off = (path * self.times.len() + step) * dim;
        &self.states[off..off + dim]
    }

    pub fn terminal(&self, path: usize) -> &[f64] {
        self.state(path, self.n_steps())
    }

    pub fn increments(&self, path: usize) -> &[f64] {
        let len = self.n_steps() * self.k;
        &self.dw[path * len..(path + 1) * len]
    }

    pub fn convolutions(&self, path: usize) -> &[f64] {
        let len = self.n_steps() * self.dim();
        &self.conv[path * len..(path + 1) * len]
    }

    /// Largest deviation of the pooled per-step increment covariance from `h I`,
    /// and its standard error scale `h·sqrt(2/n)`.
    pub fn increment_covariance_defect(&self) -> (f64, f64) {
        let k = self.k;
        let n = (self.n_paths * self.n_steps()) as f64;
        let mut cov = vec![0.0; k * k];
        let mut h_mean = 0.0;
        for p in 0..self.n_paths {
            let inc = self.increments(p);
            for step in 0..self.n_steps() {
                let w = &inc[step * k..(step + 1) * k];
                let h = self.times[step + 1] - self.times[step];
                h_mean += h / n;
                for a in 0..k {
                    for b in 0..k {
                        cov[a * k + b] += w[a] * w[b] / h / n;
                    }
                }
            }
        }
        let defect = (0..k * k)
            .map(|i| (cov[i] - if i / k == i % k { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        (defect * h_mean, h_mean * (2.0 / n).sqrt())
    }
}

/// Simulates `n_paths` exact linear paths from `z` over `[s, t]`.
pub fn sample_linear(model: &SpectralModel, s: f64, t: f64, z: &[f64], n_paths: usize, n_steps: usize, seed: u64) -> Result<PathBundle> {
    if n_paths == 0 {
        return Err(Error::param("n_paths", "must be at least 1"));
    }
    if z.len() != model.dim() {
        return Err(Error::param("z", format!("expected length {}", model.dim())));
    }
    let stepper = LinearStepper::new(model, s, t, n_steps)?;
    let (dim, k) = (model.dim(), model.k());
    let stream = "linear_flow.sample_linear".to_string();
    let root = substream(seed, &stream);
    let per_state = (n_steps + 1) * dim;
    let mut states = vec![0.0; n_paths * per_state];
    let mut dw = vec![0.0; n_paths * n_steps * k];
    let mut conv = vec![0.0; n_paths * n_steps * dim];
    states
        .par_chunks_mut(per_state)
        .zip(dw.par_chunks_mut(n_steps * k))
        .zip(conv.par_chunks_mut(n_steps * dim))
        .enumerate()
        .for_each(|(p, ((st, w), c))| {
            let mut rng = path_rng(root, p as u64);
            stepper.simulate(z, &mut rng, st, w, c);
        });
    Ok(PathBundle { times: stepper.times, n_paths, m: model.m(), d: model.d(), k, states, dw, conv, seed, stream })
}

/// How `P⁰_{s,t} f(z)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum P0Method {
    /// Tensor Gauss–Hermite with `nodes` points per dimension (`m+d ≤ 4`).
    GaussHermite { nodes: usize },
    MonteCarlo { n_samples: usize, seed: u64 },
}

pub const GAUSS_HERMITE_MAX_DIM: usize = 4;

/// Expectation of `f` under a Gaussian law.
pub fn gaussian_expectation(law: &GaussianLaw, f: &(dyn Fn(&[f64]) -> f64 + Sync), method: P0Method) -> Result<Estimate> {
    let dim = law.dim();
    let l = linalg::psd_factor(&law.cov, PSD_CUTOFF);
    match method {
        P0Method::GaussHermite { nodes } => {
            if dim > GAUSS_HERMITE_MAX_DIM {
                return Err(Error::Capability(format!(
                    "Gauss-Hermite quadrature supports state dimension <= {GAUSS_HERMITE_MAX_DIM}, got {dim}"
                )));
            }
            if nodes == 0 {
                return Err(Error::param("nodes", "must be at least 1"));
            }
            let (x, w) = quad::gauss_hermite_normal(nodes);
            let total = nodes.pow(dim as u32);
            let mut acc = 0.0;
            let mut xi = vec![0.0; dim];
            let mut z = vec![0.0; dim];
            for idx in 0..total {
                let mut rem = idx;
                let mut weight = 1.0;
                for q in xi.iter_mut() {
                    let j = rem % nodes;
                    rem /= nodes;
                    *q = x[j];
                    weight *= w[j];
                }
                for i in 0..dim {
                    z[i] = law.mean[i] + (0..dim).map(|j| l[(i, j)] * xi[j]).sum::<f64>();
                }
                acc += weight * f(&z);
            }
            Ok(Estimate { value: acc, stderr: 0.0, n: total })
        }
        P0Method::MonteCarlo { n_samples, seed } => {
            if n_samples == 0 {
                return Err(Error::param("n_samples", "must be at least 1"));
            }
            let root = substream(seed, "linear_flow.apply_p0");
            let samples: Vec<f64> = (0..n_samples)
                .into_par_iter()
                .map(|p| {
                    let mut rng = path_rng(root, p as u64);
                    let xi: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                    let z: Vec<f64> = (0..dim).map(|i| law.mean[i] + (0..dim).map(|j| l[(i, j)] * xi[j]).sum::<f64>()).collect();
                    f(&z)
                })
                .collect();
            Ok(Estimate::from_samples(&samples))
        }
    }
}

/// `P⁰_{s,t} f(z) = E f(Z⁰_{s,t}(z))`.
pub fn apply_p0(model: &SpectralModel, s: f64, t: f64, f: &(dyn Fn(&[f64]) -> f64 + Sync), z: &[f64], method: P0Method) -> Result<Estimate> {
    if let P0Method::GaussHermite { .. } = method {
        if model.dim() > GAUSS_HERMITE_MAX_DIM {
            return Err(Error::Capability(format!(
                "Gauss-Hermite quadrature supports state dimension <= {GAUSS_HERMITE_MAX_DIM}, got {}",
                model.dim()
            )));
        }
    }
    let law = transition_law(model, s, t, z)?;
    gaussian_expectation(&law, f, method)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsReport {
    /// `Σ_i ∫_s^t e^{-2λ_i(t-r)} ‖σ_r row_i‖² dr`.
    pub value: f64,
    /// Constant `c₂` with `value ≤ c₂ (t-s)^δ`, including the eigenvalue tail.
    pub bound_c2: f64,
    /// Fitted slope of `log value` against `log gap` over `gaps`.
    pub exponent_check: f64,
    pub gaps: Vec<f64>,
    pub values: Vec<f64>,
}

/// Sweep gaps used for the exponent fit.
pub const HS_SWEEP: [i32; 6] = [-8, -7, -6, -5, -4, -3];

fn hs_value(model: &SpectralModel, lams: &[f64], s: f64, t: f64) -> f64 {
    match &model.sigma {
        Sigma::Constant(sig) => lams
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let c: f64 = sig.row(i).iter().map(|v| v * v).sum();
                c * exp_moments(2.0 * l, t - s)[0]
            })
            .sum(),
        Sigma::TimeDependent { .. } => quad::adaptive(
            |r| {
                let sig = model.sigma.at(r);
                lams.iter()
                    .enumerate()
                    .map(|(i, l)| sig.row(i).iter().map(|v| v * v).sum::<f64>() * (-2.0 * l * (t - r)).exp())
                    .sum()
            },
            s,
            t,
            1e-15,
            1e-12,
        ),
    }
}

/// Hilbert–Schmidt size of the stochastic convolution in the noisy component
/// and the envelope `c₂ (t-s)^δ`.
///
/// Uses `(1 - e^{-2λτ})/(2λ) ≤ 2^{δ-1} λ^{δ-1} τ^δ`, so
/// `c₂ = 2^{δ-1} (Σ_i c_i λ_i^{δ-1} + max_i c_i · Σ_{i>n} λ_i^{δ-1})` with
/// per-mode `c_i = sup_r ‖σ_r row_i‖²`.
pub fn hs_noise_integral(model: &SpectralModel, s: f64, t: f64) -> Result<HsReport> {
    let lams = model
        .eigenvalues
        .as_ref()
        .ok_or_else(|| Error::Capability("hs_noise_integral needs a spectral-family model".into()))?;
    if !(t > s) {
        return Err(Error::Domain(format!("need t > s (s = {s}, t = {t})")));
    }
    let delta = model.delta;
    let row_sup: Vec<f64> = (0..lams.len())
        .map(|i| {
            [0.0, 0.25, 0.5, 0.75, 1.0]
                .iter()
                .map(|r| model.sigma.at(*r).row(i).iter().map(|v| v * v).sum::<f64>())
                .fold(0.0, f64::max)
        })
        .collect();
    let head: f64 = lams.iter().zip(&row_sup).map(|(l, c)| c * l.powf(delta - 1.0)).sum();
    let cmax = row_sup.iter().copied().fold(0.0, f64::max);
    let tail = model.tail.tail_sum(lams.len(), 1.0 - delta).unwrap_or(0.0);
    let bound_c2 = 2f64.powf(delta - 1.0) * (head + cmax * tail);
    let gaps: Vec<f64> = HS_SWEEP.iter().map(|k| 2f64.powi(*k)).collect();
    let values: Vec<f64> = gaps.iter().map(|g| hs_value(model, lams, s, s + g)).collect();
    let exponent_check = if values.iter().all(|v| *v > 0.0) { log_log_slope(&gaps, &values) } else { f64::NAN };
    Ok(HsReport { value: hs_value(model, lams, s, t), bound_c2, exponent_check, gaps, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_example, DriftFamily, ExampleKind, ExampleParams, TailRule};
    use approx::assert_relative_eq;

    #[test]
    fn kinetic_law_closed_form() {
        let m = SpectralModel::kinetic_scalar();
        let t: f64 = 0.7;
        let law = transition_law(&m, 0.0, t, &[0.3, -1.2]).unwrap();
        assert_relative_eq!(law.mean[0], 0.3 - 1.2 * t, epsilon = 1e-14);
        assert_relative_eq!(law.mean[1], -1.2, epsilon = 1e-14);
        assert_relative_eq!(law.cov[(0, 0)], t.powi(3) / 3.0, epsilon = 1e-13);
        assert_relative_eq!(law.cov[(0, 1)], t * t / 2.0, epsilon = 1e-13);
        assert_relative_eq!(law.cov[(1, 1)], t, epsilon = 1e-13);
        let q = covariance_by_quadrature(&m, 0.0, t);
        assert!(linalg::max_abs_diff(&q, &law.cov) < 1e-11);
    }

    #[test]
    fn zero_noise_law_is_deterministic() {
        let mut m = SpectralModel::kinetic_scalar();
        m.sigma = Sigma::Constant(Mat::zeros(1, 1));
        let law = transition_law(&m, 0.0, 1.0, &[1.0, 2.0]).unwrap();
        assert_eq!(law.cov, Mat::zeros(2, 2));
        assert_eq!(law.mean.as_slice(), &[3.0, 2.0]);
    }

    #[test]
    fn wave_mode_variances() {
        let (m, _) = build_example(ExampleKind::Wave, &ExampleParams::wave(1.0, 1, 4), &DriftFamily::Zero).unwrap();
        let law = transition_law(&m, 0.0, 0.1, &[0.0; 8]).unwrap();
        for (i, l) in m.eigenvalues.as_ref().unwrap().iter().enumerate() {
            let v = (1.0 - (-2.0 * l * 0.1f64).exp()) / (2.0 * l);
            assert_relative_eq!(law.cov[(4 + i, 4 + i)], v, max_relative = 1e-12);
        }
        // closed-form spectral path agrees with the general construction
        let general = linalg::van_loan_covariance(&m.generator(), &(m.noise_input(0.0) * m.noise_input(0.0).transpose()), 0.1);
        assert!(linalg::max_abs_diff(&general, &law.cov) < 1e-10);
    }

    #[test]
    fn time_dependent_sigma_matches_quadrature() {
        let mut m = SpectralModel::kinetic_scalar();
        m.sigma = Sigma::TimeDependent { rows: 1, cols: 1, f: std::sync::Arc::new(|t| Mat::from_element(1, 1, 1.0 + t)) };
        let law = transition_law(&m, 0.0, 1.0, &[0.0, 0.0]).unwrap();
        // Var Y_1 = ∫_0^1 (1+r)^2 dr = 7/3
        assert_relative_eq!(law.cov[(1, 1)], 7.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn bundle_is_deterministic_and_noise_free_when_sigma_zero() {
        let m = SpectralModel::kinetic_scalar();
        let a = sample_linear(&m, 0.0, 1.0, &[0.1, 0.2], 16, 8, 5).unwrap();
        let b = sample_linear(&m, 0.0, 1.0, &[0.1, 0.2], 16, 8, 5).unwrap();
        assert_eq!(a, b);
        let mut q = m.clone();
        q.sigma = Sigma::Constant(Mat::zeros(1, 1));
        let c = sample_linear(&q, 0.0, 1.0, &[0.1, 0.2], 4, 8, 5).unwrap();
        let law = transition_law(&q, 0.0, 1.0, &[0.1, 0.2]).unwrap();
        for p in 0..4 {
            assert!((c.terminal(p)[0] - law.mean[0]).abs() < 1e-15);
            assert_eq!(c.terminal(p)[1], 0.2);
        }
    }

    #[test]
    fn single_step_noise_matches_law() {
        let m = SpectralModel::kinetic_scalar();
        let b = sample_linear(&m, 0.0, 1.0, &[0.0, 0.0], 100_000, 1, 9).unwrap();
        let ys: Vec<f64> = (0..b.n_paths).map(|p| b.terminal(p)[1]).collect();
        let var = ys.iter().map(|y| y * y).sum::<f64>() / ys.len() as f64;
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn gauss_hermite_vs_mean() {
        let m = SpectralModel::kinetic_scalar();
        let e = apply_p0(&m, 0.0, 1.0, &|z| z[0], &[0.0, 1.0], P0Method::GaussHermite { nodes: 4 }).unwrap();
        assert_relative_eq!(e.value, 1.0, epsilon = 1e-13);
        let one = apply_p0(&m, 0.0, 1.0, &|_| 1.0, &[0.0, 1.0], P0Method::GaussHermite { nodes: 3 }).unwrap();
        assert_relative_eq!(one.value, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn gauss_hermite_refuses_large_dimension() {
        let (m, _) = build_example(ExampleKind::Wave, &ExampleParams::wave(1.0, 1, 3), &DriftFamily::Zero).unwrap();
        let r = apply_p0(&m, 0.0, 1.0, &|_| 1.0, &[0.0; 6], P0Method::GaussHermite { nodes: 2 });
        assert!(matches!(r, Err(Error::Capability(_))));
    }

    #[test]
    fn hs_single_mode_closed_form() {
        let m = SpectralModel::spectral(vec![1.0], Sigma::Constant(Mat::identity(1, 1)), 0.4, TailRule::None).unwrap();
        let r = hs_noise_integral(&m, 0.0, 0.5).unwrap();
        assert_relative_eq!(r.value, (1.0 - (-1.0f64).exp()) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn exp_moments_series_and_closed_form_agree() {
        for a in [0.4999, 0.5001] {
            let h = 1.0;
            let m = exp_moments(a, h);
            let q0 = quad::adaptive(|u| (-a * u).exp(), 0.0, h, 1e-15, 1e-14);
            let q2 = quad::adaptive(|u| u * u * (-a * u).exp(), 0.0, h, 1e-15, 1e-14);
            assert_relative_eq!(m[0], q0, epsilon = 1e-14);
            assert_relative_eq!(m[2], q2, epsilon = 1e-14);
        }
    }
}
