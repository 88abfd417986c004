//! The fixed-point field `u^λ_s = ∫_s^T e^{-λ(t-s)} P⁰_{s,t}{∇^{(2)}_{b_t} u_t + b_t} dt`
//! on a tensor grid.
//!
//! `Γ^λ` is applied by a backward recursion over sub-steps of length `H`:
//! `U_s = P_H[e^{-λH} U_{s+H}] + ∫_0^H e^{-λu} P_u g_{s+u} du`. `P_u` is split
//! into an exact semi-Lagrangian transport along `e^{u𝔸}` and the semi-discrete
//! heat semigroup in the noisy coordinates, applied through a precomputed
//! eigendecomposition of each axis' second-difference operator. The local
//! integral freezes `g` at the midpoint and uses Gauss–Legendre nodes in
//! `τ = √u`, which absorbs the `u^{-1/2}` gradient singularity at `u = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{h_norm_of, FieldGrid, GridSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{DriftSpec, Sigma, SpectralModel};
use crate::stats;

/// Upper bound on `λH` for a sub-step.
pub const MAX_LAMBDA_STEP: f64 = 0.5;
/// Minimum number of sub-steps between stored time nodes.
pub const MIN_SUBSTEPS: usize = 2;
/// Gauss–Legendre nodes in `τ = √u` for the local integral.
pub const LOCAL_NODES: usize = 3;
/// Factors are only measured once the previous increment is above this
/// fraction of the iterate's norm.
const FACTOR_FLOOR: f64 = 1e-13;

pub const LAMBDA_START: f64 = 16.0;
pub const LAMBDA_CAP: f64 = 1048576.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardReport {
    pub lambda: f64,
    pub iterations: usize,
    /// `sup |u^{(k+1)} - u^{(k)}|` per iteration.
    pub residuals: Vec<f64>,
    /// Ratios of successive increments in the `sup + gradient` norm.
    pub factors: Vec<f64>,
    pub converged: bool,
    pub sup_norm: f64,
    pub grad2_sup: f64,
    /// `sup |u| + sup |∇u|` of the returned field.
    pub h_norm: f64,
}

impl PicardReport {
    pub const CSV_HEADER: &'static str = "iteration,residual,factor";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for (i, r) in self.residuals.iter().enumerate() {
            let f = if i == 0 { String::new() } else { self.factors.get(i - 1).map(|f| format!("{f:.12e}")).unwrap_or_default() };
            s.push_str(&format!("{},{r:.12e},{f}\n", i + 1));
        }
        s
    }

    pub fn max_factor(&self) -> Option<f64> {
        self.factors.iter().copied().reduce(f64::max)
    }

    /// Last three measured factors are `<= 1/2`, or the iteration converged
    /// before three were available and every measured factor is `<= 1/2`.
    pub fn contracts_by_half(&self) -> bool {
        let n = self.factors.len();
        if n >= 3 {
            self.factors[n - 3..].iter().all(|f| *f <= 0.5)
        } else {
            self.converged && self.factors.iter().all(|f| *f <= 0.5)
        }
    }
}

/// Eigendecomposition `L = V diag(μ) V^{-1}` of the Neumann second-difference
/// operator on one (possibly non-uniform) axis. `L` is self-adjoint for the
/// node weights `w_i = (h_{i-1} + h_i) / 2`, so `μ` is real and `≤ 0`.
struct AxisHeat {
    axis: usize,
    v: Mat,
    v_inv: Mat,
    mu: Vec<f64>,
}

impl AxisHeat {
    fn new(axis: usize, nodes: &[f64]) -> Self {
        let n = nodes.len();
        let h: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let w: Vec<f64> = (0..n)
            .map(|i| 0.5 * (if i > 0 { h[i - 1] } else { 0.0 } + if i + 1 < n { h[i] } else { 0.0 }))
            .collect();
        // w_i L_{i,i±1} = 1 / h, so the symmetrized matrix has off-diagonals 1 / (h sqrt(w w'))
        let mut sym = Mat::zeros(n, n);
        for i in 0..n - 1 {
            let off = 1.0 / (h[i] * (w[i] * w[i + 1]).sqrt());
            sym[(i, i + 1)] = off;
            sym[(i + 1, i)] = off;
            sym[(i, i)] -= 1.0 / (h[i] * w[i]);
            sym[(i + 1, i + 1)] -= 1.0 / (h[i] * w[i + 1]);
        }
        let eig = sym.symmetric_eigen();
        let q = eig.eigenvectors;
        let mut v = q.clone();
        let mut v_inv = q.transpose();
        for i in 0..n {
            let sw = w[i].sqrt();
            for j in 0..n {
                v[(i, j)] /= sw;
                v_inv[(j, i)] *= sw;
            }
        }
        AxisHeat { axis, v, v_inv, mu: eig.eigenvalues.iter().map(|m| m.min(0.0)).collect() }
    }
}

/// Precomputed pieces of `Γ^λ` for one `(model, b, λ, grid)`.
struct GammaOp {
    lambda: f64,
    n_sub: usize,
    h: f64,
    /// `2^dim` (index, weight) pairs per point: interpolation at `e^{H𝔸} z`.
    stencil: Vec<(u32, f64)>,
    /// Local-integral nodes `u_q`, normalized weights and transport stencils.
    local: Vec<(f64, f64, Vec<(u32, f64)>)>,
    heat: Vec<AxisHeat>,
    /// Dense `exp(c L)` per `[slot][axis]` when `σ` is constant.
    propagators: Option<Vec<Vec<Mat>>>,
    /// Diagonal of `σσ*` at the midpoint of every sub-step (one entry when constant).
    diff_coeffs: Vec<Vec<f64>>,
    /// Drift at the nodes, `[time][point][component]`.
    drift: Vec<f64>,
    template: FieldGrid,
}

impl GammaOp {
    fn new(model: &SpectralModel, b: &DriftSpec, lambda: f64, spec: &GridSpec) -> Result<Self> {
        let (m, d) = (model.m(), model.d());
        if b.m != m || b.d != d {
            return Err(Error::param("b", format!("drift dimensions ({}, {}) do not match the model ({m}, {d})", b.m, b.d)));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::param("lambda", "must be finite and nonnegative"));
        }
        let template = FieldGrid::zeros(spec, m, d)?;
        let interval = spec.horizon / (spec.time_nodes - 1) as f64;
        let n_sub = MIN_SUBSTEPS.max((lambda * interval / MAX_LAMBDA_STEP).ceil() as usize);
        let h = interval / n_sub as f64;

        let dim = m + d;
        let stencil = transport_stencil(&template, &linalg::expm_scaled(&model.generator(), h));
        let (tq, wq) = crate::quad::gauss_legendre(LOCAL_NODES);
        let root = h.sqrt();
        let mut local: Vec<(f64, f64, Vec<(u32, f64)>)> = tq
            .iter()
            .zip(&wq)
            .map(|(t, w)| {
                let tau = 0.5 * root * (t + 1.0);
                let u = tau * tau;
                let weight = 0.5 * root * w * 2.0 * tau * (-lambda * u).exp();
                (u, weight, transport_stencil(&template, &linalg::expm_scaled(&model.generator(), u)))
            })
            .collect();
        let x = lambda * h;
        let exact = if x < 1e-8 { h * (1.0 - x / 2.0) } else { -(-x).exp_m1() / lambda };
        let total: f64 = local.iter().map(|l| l.1).sum();
        for l in &mut local {
            l.1 *= exact / total;
        }
        let np = template.n_points();

        let heat: Vec<AxisHeat> = (m..dim).map(|a| AxisHeat::new(a, &template.nodes[a])).collect();
        let coeff_at = |t: f64| -> Result<Vec<f64>> {
            let s = model.sigma.at(t);
            let a = &s * s.transpose();
            let top = (0..d).map(|i| a[(i, i)]).fold(0.0, f64::max);
            for i in 0..d {
                for j in 0..d {
                    if i != j && a[(i, j)].abs() > 1e-12 * top.max(1e-300) {
                        return Err(Error::Capability(
                            "grid solver needs uncorrelated noise across y-coordinates (diagonal σσ*)".into(),
                        ));
                    }
                }
            }
            Ok((0..d).map(|i| a[(i, i)]).collect())
        };
        let diff_coeffs = match &model.sigma {
            Sigma::Constant(_) => vec![coeff_at(0.0)?],
            Sigma::TimeDependent { .. } => {
                let total = n_sub * (spec.time_nodes - 1);
                (0..total).map(|j| coeff_at((j as f64 + 0.5) * h)).collect::<Result<_>>()?
            }
        };

        let propagators = match &model.sigma {
            Sigma::Constant(_) => {
                let taus: Vec<f64> = std::iter::once(h).chain(local.iter().map(|l| l.0)).collect();
                Some(
                    taus.iter()
                        .map(|tau| {
                            heat.iter()
                                .enumerate()
                                .map(|(yi, ah)| {
                                    let c = 0.5 * diff_coeffs[0][yi] * tau;
                                    let e = Mat::from_diagonal(&linalg::Vector::from_iterator(
                                        ah.mu.len(),
                                        ah.mu.iter().map(|mu| (c * mu).exp()),
                                    ));
                                    &ah.v * e * &ah.v_inv
                                })
                                .collect()
                        })
                        .collect(),
                )
            }
            Sigma::TimeDependent { .. } => None,
        };

        let nt = template.times.len();
        let mut drift = vec![0.0; nt * np * d];
        drift.par_chunks_mut(np * d).enumerate().for_each(|(ti, chunk)| {
            let t = template.times[ti];
            let mut z = vec![0.0; dim];
            for p in 0..np {
                template.point(p, &mut z);
                b.eval_into(t, &z, &mut chunk[p * d..(p + 1) * d]);
            }
        });
        if let Some(bad) = drift.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluator(format!(
                "drift `{}` is not finite at grid node {} (time node {})",
                b.name,
                (bad / d) % np,
                bad / (np * d)
            )));
        }
        Ok(GammaOp { lambda, n_sub, h, stencil, local, heat, propagators, diff_coeffs, drift, template })
    }

    /// Heat flow `exp(τ ½ σσ*_{ii} ∂²_{y_i})` in every noisy coordinate; `slot`
    /// indexes the cached propagators (0 for `H`, `1 + q` for local node `q`).
    fn diffuse(&self, coeffs: &[f64], slot: usize, tau: f64, u: &mut [f64], work: &mut (Mat, Mat)) {
        for (yi, ah) in self.heat.iter().enumerate() {
            let c = 0.5 * coeffs[yi] * tau;
            if c <= 0.0 {
                continue;
            }
            let (x, y) = work;
            gather_lines(&self.template, ah.axis, u, x);
            if y.shape() != x.shape() {
                *y = Mat::zeros(x.nrows(), x.ncols());
            }
            match &self.propagators {
                Some(p) => p[slot][yi].mul_to(x, y),
                None => {
                    let mut t = &ah.v_inv * &*x;
                    for (k, mu) in ah.mu.iter().enumerate() {
                        let e = (c * mu).exp();
                        t.row_mut(k).scale_mut(e);
                    }
                    ah.v.mul_to(&t, y);
                }
            }
            scatter_lines(&self.template, ah.axis, y, u);
        }
    }

    /// `g_t = ∇^{(2)}_{b_t} f_t + b_t` at every stored node.
    fn source(&self, f: &[f64]) -> Vec<f64> {
        let g0 = &self.template;
        let (m, d) = (g0.m, g0.d);
        let np = g0.n_points();
        let n = np * d;
        let strides = g0.strides();
        let mut out = self.drift.clone();
        out.par_chunks_mut(n).enumerate().for_each(|(ti, chunk)| {
            let fs = &f[ti * n..(ti + 1) * n];
            let bs = &self.drift[ti * n..(ti + 1) * n];
            for p in 0..np {
                for j in 0..d {
                    let bj = bs[p * d + j];
                    if bj == 0.0 {
                        continue;
                    }
                    for c in 0..d {
                        chunk[p * d + c] += g0.node_derivative(fs, p, m + j, c, &strides) * bj;
                    }
                }
            }
        });
        out
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        let g0 = &self.template;
        let d = g0.d;
        let np = g0.n_points();
        let n = np * d;
        let nt = g0.times.len();
        let g = self.source(f);
        let decay = (-self.lambda * self.h).exp();
        let mut out = vec![0.0; nt * n];
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut gm = vec![0.0; n];
        let mut work = (Mat::zeros(0, 0), Mat::zeros(0, 0));
        for i in (0..nt - 1).rev() {
            let (ga, gb) = (&g[i * n..(i + 1) * n], &g[(i + 1) * n..(i + 2) * n]);
            for j in (0..self.n_sub).rev() {
                let coeffs = if self.diff_coeffs.len() == 1 {
                    &self.diff_coeffs[0]
                } else {
                    &self.diff_coeffs[i * self.n_sub + j]
                };
                for k in 0..n {
                    v[k] = decay * u[k];
                }
                transport(&self.stencil, d, &v, &mut u);
                self.diffuse(coeffs, 0, self.h, &mut u, &mut work);

                let wm = (j as f64 + 0.5) / self.n_sub as f64;
                for k in 0..n {
                    gm[k] = (1.0 - wm) * ga[k] + wm * gb[k];
                }
                for (q, (uq, wq, st)) in self.local.iter().enumerate() {
                    transport(st, d, &gm, &mut v);
                    self.diffuse(coeffs, 1 + q, *uq, &mut v, &mut work);
                    for k in 0..n {
                        u[k] += wq * v[k];
                    }
                }
            }
            out[i * n..(i + 1) * n].copy_from_slice(&u);
        }
        out
    }
}

/// Interpolation of `v` at precomputed foot points.
fn transport(stencil: &[(u32, f64)], d: usize, v: &[f64], out: &mut [f64]) {
    let np = out.len() / d;
    let corners = stencil.len() / np;
    for p in 0..np {
        let st = &stencil[p * corners..(p + 1) * corners];
        for c in 0..d {
            out[p * d + c] = st.iter().map(|(idx, w)| w * v[*idx as usize * d + c]).sum();
        }
    }
}

fn transport_stencil(grid: &FieldGrid, flow: &linalg::Mat) -> Vec<(u32, f64)> {
    let dim = grid.dim();
    let np = grid.n_points();
    let strides = grid.strides();
    let corners = 1usize << dim;
    let mut stencil = Vec::with_capacity(np * corners);
    let mut z = vec![0.0; dim];
    for p in 0..np {
        grid.point(p, &mut z);
        let foot = flow * linalg::Vector::from_column_slice(&z);
        let mut base = 0;
        let mut frac = [0.0; 3];
        for a in 0..dim {
            let (i, t) = super::grid::locate(&grid.nodes[a], foot[a]);
            base += i * strides[a];
            frac[a] = t;
        }
        for corner in 0..corners {
            let mut w = 1.0;
            let mut idx = base;
            for a in 0..dim {
                if corner >> a & 1 == 1 {
                    w *= frac[a];
                    idx += strides[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            stencil.push((idx as u32, w));
        }
    }
    stencil
}

/// Lines of `axis` gathered as the columns of a `len × (lines·d)` matrix.
fn gather_lines(grid: &FieldGrid, axis: usize, u: &[f64], x: &mut Mat) {
    let d = grid.d;
    let st = grid.strides()[axis];
    let len = grid.nodes[axis].len();
    let np = grid.n_points();
    let cols = np / len * d;
    if x.shape() != (len, cols) {
        *x = Mat::zeros(len, cols);
    }
    let mut col = 0;
    for start in (0..np).filter(|p| (p / st).is_multiple_of(len)) {
        for comp in 0..d {
            for i in 0..len {
                x[(i, col)] = u[(start + i * st) * d + comp];
            }
            col += 1;
        }
    }
}

fn scatter_lines(grid: &FieldGrid, axis: usize, x: &Mat, u: &mut [f64]) {
    let d = grid.d;
    let st = grid.strides()[axis];
    let len = grid.nodes[axis].len();
    let np = grid.n_points();
    let mut col = 0;
    for start in (0..np).filter(|p| (p / st).is_multiple_of(len)) {
        for comp in 0..d {
            for i in 0..len {
                u[(start + i * st) * d + comp] = x[(i, col)];
            }
            col += 1;
        }
    }
}

/// One application of `Γ^λ` to a field on `spec`.
pub fn apply_gamma(model: &SpectralModel, b: &DriftSpec, lambda: f64, field: &FieldGrid, spec: &GridSpec) -> Result<FieldGrid> {
    let op = GammaOp::new(model, b, lambda, spec)?;
    if field.values.len() != op.template.values.len() {
        return Err(Error::param("field", "layout does not match the grid spec"));
    }
    let mut out = op.template.clone();
    out.values = op.apply(&field.values);
    Ok(out)
}

/// Picard iteration `u^{(k+1)} = Γ^λ(u^{(k)})` from `u^{(0)} = 0`.
pub fn picard_solve(
    model: &SpectralModel,
    b: &DriftSpec,
    lambda: f64,
    spec: &GridSpec,
    tol: f64,
    max_iter: usize,
) -> Result<(FieldGrid, PicardReport)> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    if max_iter == 0 {
        return Err(Error::param("max_iter", "must be at least 1"));
    }
    let op = GammaOp::new(model, b, lambda, spec)?;
    let mut u = op.template.clone();
    let mut residuals = Vec::new();
    let mut factors = Vec::new();
    let mut prev: Option<f64> = None;
    let mut streak = 0;
    let mut converged = false;
    for _ in 0..max_iter {
        let next = op.apply(&u.values);
        let delta: Vec<f64> = next.iter().zip(&u.values).map(|(a, b)| a - b).collect();
        let residual = delta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let diff = h_norm_of(&u, &delta);
        if let Some(p) = prev {
            if p > FACTOR_FLOOR * h_norm_of(&u, &next).max(1.0) {
                let f = diff / p;
                factors.push(f);
                streak = if f >= 1.0 { streak + 1 } else { 0 };
                if streak >= 3 {
                    return Err(Error::LambdaTooSmall { lambda, suggested: 2.0 * lambda.max(1.0) });
                }
            }
        }
        prev = Some(diff);
        u.values = next;
        residuals.push(residual);
        if !residual.is_finite() {
            return Err(Error::Numerical(format!("Picard iteration diverged at lambda = {lambda}")));
        }
        if residual < tol {
            converged = true;
            break;
        }
    }
    let report = PicardReport {
        lambda,
        iterations: residuals.len(),
        residuals,
        factors,
        converged,
        sup_norm: u.sup_norm(),
        grad2_sup: u.grad2_sup(),
        h_norm: u.h_norm(),
    };
    Ok((u, report))
}

#[derive(Debug, Clone)]
pub struct LambdaSearch {
    pub lambda: f64,
    pub field: FieldGrid,
    pub report: PicardReport,
    /// `(λ, largest measured factor)` for every attempt; `None` when the
    /// attempt stopped on non-contraction.
    pub attempts: Vec<(f64, Option<f64>)>,
}

/// Doubling search for `λ(R)`: from `λ = 16`, double until the Picard
/// iteration shows three consecutive contraction factors `<= 1/2`.
pub fn search_lambda(model: &SpectralModel, b: &DriftSpec, spec: &GridSpec, tol: f64, max_iter: usize) -> Result<LambdaSearch> {
    let mut lambda = LAMBDA_START;
    let mut attempts = Vec::new();
    while lambda <= LAMBDA_CAP {
        match picard_solve(model, b, lambda, spec, tol, max_iter) {
            Ok((field, report)) => {
                attempts.push((lambda, report.max_factor()));
                if report.contracts_by_half() {
                    return Ok(LambdaSearch { lambda, field, report, attempts });
                }
            }
            Err(Error::LambdaTooSmall { .. }) => attempts.push((lambda, None)),
            Err(e) => return Err(e),
        }
        lambda *= 2.0;
    }
    Err(Error::Numerical(format!("no contracting lambda up to {LAMBDA_CAP}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSweep {
    pub lambdas: Vec<f64>,
    pub reports: Vec<PicardReport>,
    /// Log-log slope of `sup |u| + sup |∇u|` against `λ`.
    pub h_norm_slope: f64,
    /// Log-log slope of `sup |u|`.
    pub sup_slope: f64,
    /// Log-log slope of `sup ‖∇^{(2)} u‖`.
    pub grad2_slope: f64,
}

impl LambdaSweep {
    pub const CSV_HEADER: &'static str = "lambda,iterations,sup_norm,grad2_sup,h_norm,max_factor";

    pub fn csv_rows(&self) -> Vec<String> {
        self.reports
            .iter()
            .map(|r| {
                format!(
                    "{},{},{:.12e},{:.12e},{:.12e},{}",
                    r.lambda,
                    r.iterations,
                    r.sup_norm,
                    r.grad2_sup,
                    r.h_norm,
                    r.max_factor().map(|f| format!("{f:.6e}")).unwrap_or_default()
                )
            })
            .collect()
    }
}

/// Solves the fixed point at every `λ` (concurrently) and fits decay rates.
pub fn lambda_sweep(
    model: &SpectralModel,
    b: &DriftSpec,
    spec: &GridSpec,
    lambdas: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<LambdaSweep> {
    if lambdas.len() < 2 {
        return Err(Error::param("lambdas", "need at least two values"));
    }
    let reports: Vec<PicardReport> = lambdas
        .par_iter()
        .map(|&l| picard_solve(model, b, l, spec, tol, max_iter).map(|(_, r)| r))
        .collect::<Result<_>>()?;
    let pick = |f: fn(&PicardReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    Ok(LambdaSweep {
        lambdas: lambdas.to_vec(),
        h_norm_slope: stats::log_log_slope(lambdas, &pick(|r| r.h_norm)),
        sup_slope: stats::log_log_slope(lambdas, &pick(|r| r.sup_norm)),
        grad2_slope: stats::log_log_slope(lambdas, &pick(|r| r.grad2_sup)),
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriftFamily, SpectralModel};

    fn small_spec() -> GridSpec {
        GridSpec::uniform(2, -3.0, 3.0, 25, 9, 1.0)
    }

    #[test]
    fn zero_drift_gives_zero_field_in_one_iteration() {
        let model = SpectralModel::kinetic_scalar();
        let b = DriftSpec::zero(1, 1);
        let (u, rep) = picard_solve(&model, &b, 16.0, &small_spec(), 1e-10, 50).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(u.sup_norm(), 0.0);
    }

    #[test]
    fn constant_drift_matches_closed_form() {
        let model = SpectralModel::kinetic_scalar();
        let c = 0.7;
        let b = DriftSpec::constant(1, vec![c]);
        let lambda = 32.0;
        let (u, rep) = picard_solve(&model, &b, lambda, &small_spec(), 1e-12, 50).unwrap();
        assert!(rep.converged);
        for (ti, &s) in u.times.iter().enumerate() {
            let exact = c * (1.0 - (-lambda * (1.0 - s)).exp()) / lambda;
            for v in u.slice(ti) {
                assert!((v - exact).abs() < 1e-12, "s = {s}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn fixed_point_residual_is_below_tolerance() {
        let model = SpectralModel::kinetic_scalar();
        let b = DriftFamily::TanhY { eps: 0.1 }.build(1, 1).unwrap();
        let spec = small_spec();
        let tol = 1e-9;
        let (u, rep) = picard_solve(&model, &b, 32.0, &spec, tol, 100).unwrap();
        assert!(rep.converged);
        let gu = apply_gamma(&model, &b, 32.0, &u, &spec).unwrap();
        let r = gu.values.iter().zip(&u.values).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(r <= tol, "residual {r}");
        assert!(rep.factors.iter().all(|f| *f < 0.5), "{:?}", rep.factors);
    }

    #[test]
    fn huge_drift_at_small_lambda_fails_to_contract() {
        let model = SpectralModel::kinetic_scalar();
        let b = DriftFamily::TanhY { eps: 0.05 }.build(1, 1).unwrap();
        let big = DriftSpec::new("big", 1, 1, std::sync::Arc::new(move |t, z: &[f64], out: &mut [f64]| {
            b.eval_into(t, z, out);
            out[0] *= 400.0;
        }));
        let r = picard_solve(&model, &big, 0.5, &small_spec(), 1e-10, 60);
        assert!(matches!(r, Err(Error::LambdaTooSmall { .. })), "{r:?}");
    }

    #[test]
    fn search_finds_contracting_lambda() {
        let model = SpectralModel::kinetic_scalar();
        let b = DriftFamily::TanhY { eps: 0.1 }.build(1, 1).unwrap();
        let s = search_lambda(&model, &b, &small_spec(), 1e-9, 100).unwrap();
        assert!(s.report.contracts_by_half());
        assert!(s.lambda >= LAMBDA_START);
    }
}
