//! Tensor grids over `[0, T] × box` holding `R^d`-valued fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// One grid axis. `stretch = 0` gives uniform nodes; `stretch = c > 0` maps a
/// uniform `ξ ∈ [-1, 1]` through `sinh(cξ) / sinh(c)`, clustering nodes at the
/// axis midpoint where sharp drift profiles usually sit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    #[serde(default)]
    pub stretch: f64,
}

impl Axis {
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Self {
        Axis { lo, hi, n, stretch: 0.0 }
    }

    pub fn stretched(lo: f64, hi: f64, n: usize, stretch: f64) -> Self {
        Axis { lo, hi, n, stretch }
    }

    pub fn nodes(&self) -> Vec<f64> {
        let mid = 0.5 * (self.lo + self.hi);
        let half = 0.5 * (self.hi - self.lo);
        (0..self.n)
            .map(|i| {
                if i == 0 {
                    return self.lo;
                }
                if i + 1 == self.n {
                    return self.hi;
                }
                let xi = -1.0 + 2.0 * i as f64 / (self.n - 1) as f64;
                let s = if self.stretch > 0.0 { (self.stretch * xi).sinh() / self.stretch.sinh() } else { xi };
                mid + half * s
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        if !(self.hi > self.lo) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::param("grid.axes", format!("need lo < hi, got [{}, {}]", self.lo, self.hi)));
        }
        if self.n < 3 {
            return Err(Error::param("grid.axes", "need at least 3 nodes per axis"));
        }
        if !(self.stretch >= 0.0) {
            return Err(Error::param("grid.axes", "stretch must be nonnegative"));
        }
        Ok(())
    }
}

/// Layout of a field: one axis per state coordinate (`x` axes first) and
/// `time_nodes` uniform nodes on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
    pub time_nodes: usize,
    pub horizon: f64,
}

pub const MAX_GRID_DIM: usize = 3;

impl GridSpec {
    /// `[lo, hi]^dim` with `n` nodes per axis.
    pub fn uniform(dim: usize, lo: f64, hi: f64, n: usize, time_nodes: usize, horizon: f64) -> Self {
        GridSpec { axes: vec![Axis::uniform(lo, hi, n); dim], time_nodes, horizon }
    }

    /// Default box `[-4, 4]^dim`, 65 nodes per axis, 33 time nodes on `[0, 1]`.
    pub fn default_for(dim: usize) -> Self {
        GridSpec::uniform(dim, -4.0, 4.0, 65, 33, 1.0)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if dim > MAX_GRID_DIM {
            return Err(Error::Capability(format!(
                "grid fields support total dimension <= {MAX_GRID_DIM}, got {dim}"
            )));
        }
        if self.axes.len() != dim {
            return Err(Error::param("grid.axes", format!("expected {dim} axes, got {}", self.axes.len())));
        }
        for a in &self.axes {
            a.check()?;
        }
        if self.time_nodes < 2 {
            return Err(Error::param("grid.time_nodes", "need at least 2 time nodes"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::param("grid.horizon", "must be positive"));
        }
        Ok(())
    }
}

/// An `R^d`-valued field on a time × space tensor grid, stored
/// `[time][point][component]` with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub m: usize,
    pub d: usize,
    pub times: Vec<f64>,
    pub nodes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn zeros(spec: &GridSpec, m: usize, d: usize) -> Result<Self> {
        spec.validate(m + d)?;
        let nodes: Vec<Vec<f64>> = spec.axes.iter().map(Axis::nodes).collect();
        let nt = spec.time_nodes;
        let times = (0..nt).map(|i| spec.horizon * i as f64 / (nt - 1) as f64).collect();
        let np: usize = nodes.iter().map(Vec::len).product();
        Ok(FieldGrid { m, d, times, nodes, values: vec![0.0; nt * np * d] })
    }

    pub fn dim(&self) -> usize {
        self.m + self.d
    }

    pub fn n_points(&self) -> usize {
        self.nodes.iter().map(Vec::len).product()
    }

    pub fn slice_len(&self) -> usize {
        self.n_points() * self.d
    }

    pub fn slice(&self, ti: usize) -> &[f64] {
        let n = self.slice_len();
        &self.values[ti * n..(ti + 1) * n]
    }

    pub fn slice_mut(&mut self, ti: usize) -> &mut [f64] {
        let n = self.slice_len();
        &mut self.values[ti * n..(ti + 1) * n]
    }

    pub fn strides(&self) -> Vec<usize> {
        let dim = self.dim();
        let mut s = vec![1; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.nodes[a + 1].len();
        }
        s
    }

    /// Coordinates of grid point `p`.
    pub fn point(&self, p: usize, out: &mut [f64]) {
        let mut rem = p;
        for a in (0..self.dim()).rev() {
            let n = self.nodes[a].len();
            out[a] = self.nodes[a][rem % n];
            rem /= n;
        }
    }

    pub fn lo(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n[0]).collect()
    }

    pub fn hi(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n[n.len() - 1]).collect()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter().zip(&self.nodes).all(|(v, n)| *v >= n[0] && *v <= n[n.len() - 1])
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("time nodes")
    }

    /// Multilinear interpolation of one time slice, clamping `z` to the box.
    pub fn interp_slice(&self, slice: &[f64], z: &[f64], out: &mut [f64]) {
        let dim = self.dim();
        let strides = self.strides();
        let mut base = 0;
        let mut frac = [0.0; MAX_GRID_DIM];
        let mut step = [0usize; MAX_GRID_DIM];
        for a in 0..dim {
            let (i, t) = locate(&self.nodes[a], z[a]);
            base += i * strides[a];
            frac[a] = t;
            step[a] = strides[a];
        }
        out.fill(0.0);
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut idx = base;
            for a in 0..dim {
                if corner >> a & 1 == 1 {
                    w *= frac[a];
                    idx += step[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            for c in 0..self.d {
                out[c] += w * slice[idx * self.d + c];
            }
        }
    }

    /// `u_s(z)`: multilinear in space, linear in time between nodes.
    pub fn eval_into(&self, s: f64, z: &[f64], out: &mut [f64]) {
        let (ti, w) = locate(&self.times, s);
        self.interp_slice(self.slice(ti), z, out);
        if w > 0.0 {
            let mut hi = vec![0.0; self.d];
            self.interp_slice(self.slice(ti + 1), z, &mut hi);
            for (o, h) in out.iter_mut().zip(&hi) {
                *o = (1.0 - w) * *o + w * h;
            }
        }
    }

    pub fn eval(&self, s: f64, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.eval_into(s, z, &mut out);
        out
    }

    /// Derivative along `axis` of the multilinear interpolant of one slice,
    /// taken from the cell containing `z` (right cell on a node).
    pub fn interp_slice_derivative(&self, slice: &[f64], z: &[f64], axis: usize, out: &mut [f64]) {
        let dim = self.dim();
        let strides = self.strides();
        let mut base = 0;
        let mut frac = [0.0; MAX_GRID_DIM];
        let mut width = 1.0;
        for a in 0..dim {
            let (i, t) = locate(&self.nodes[a], z[a]);
            base += i * strides[a];
            frac[a] = t;
            if a == axis {
                width = self.nodes[a][i + 1] - self.nodes[a][i];
            }
        }
        out.fill(0.0);
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut idx = base;
            for a in 0..dim {
                let up = corner >> a & 1 == 1;
                if up {
                    idx += strides[a];
                }
                w *= match (a == axis, up) {
                    (true, true) => 1.0 / width,
                    (true, false) => -1.0 / width,
                    (false, true) => frac[a],
                    (false, false) => 1.0 - frac[a],
                };
            }
            if w == 0.0 {
                continue;
            }
            for c in 0..self.d {
                out[c] += w * slice[idx * self.d + c];
            }
        }
    }

    /// `y`-Jacobian of the interpolant `u_s` at `z` (linear in time).
    pub fn interp_grad2(&self, s: f64, z: &[f64]) -> Mat {
        let (ti, w) = locate(&self.times, s);
        let d = self.d;
        let mut jac = Mat::zeros(d, d);
        let mut col = vec![0.0; d];
        let mut col_hi = vec![0.0; d];
        for j in 0..d {
            self.interp_slice_derivative(self.slice(ti), z, self.m + j, &mut col);
            if w > 0.0 {
                self.interp_slice_derivative(self.slice(ti + 1), z, self.m + j, &mut col_hi);
                for (c, h) in col.iter_mut().zip(&col_hi) {
                    *c = (1.0 - w) * *c + w * h;
                }
            }
            for c in 0..d {
                jac[(c, j)] = col[c];
            }
        }
        jac
    }

    /// Node-wise derivative of component `c` along `axis`: central differences
    /// on the (possibly non-uniform) nodes, one-sided at the boundary.
    pub fn node_derivative(&self, slice: &[f64], p: usize, axis: usize, c: usize, strides: &[usize]) -> f64 {
        let nodes = &self.nodes[axis];
        let n = nodes.len();
        let i = (p / strides[axis]) % n;
        let st = strides[axis];
        let (lo, hi, il, ih) = if i == 0 {
            (p, p + st, 0, 1)
        } else if i + 1 == n {
            (p - st, p, n - 2, n - 1)
        } else {
            (p - st, p + st, i - 1, i + 1)
        };
        (slice[hi * self.d + c] - slice[lo * self.d + c]) / (nodes[ih] - nodes[il])
    }

    /// `sup` of `|u|` over all nodes and times.
    pub fn sup_norm(&self) -> f64 {
        sup_abs_vec(&self.values, self.d)
    }

    /// `sup` over nodes and times of the operator norm of the `y`-Jacobian.
    pub fn grad2_sup(&self) -> f64 {
        (0..self.times.len()).map(|ti| self.slice_grad_sup(self.slice(ti), true)).fold(0.0, f64::max)
    }

    /// `sup |u| + sup |∇u|`: a sampled surrogate of the `C_b([0,T]; C_{γ₀,γ₁})`
    /// norm, with the full Jacobian measured in Frobenius norm.
    pub fn h_norm(&self) -> f64 {
        h_norm_of(self, &self.values)
    }

    /// Max over nodes of the Jacobian norm of one slice: operator norm of
    /// the `y`-block when `y_only`, Frobenius norm of the full Jacobian otherwise.
    pub fn slice_grad_sup(&self, slice: &[f64], y_only: bool) -> f64 {
        let strides = self.strides();
        let (m, d) = (self.m, self.d);
        let axes: Vec<usize> = if y_only { (m..m + d).collect() } else { (0..m + d).collect() };
        let mut best = 0.0_f64;
        let mut jac = Mat::zeros(d, axes.len());
        for p in 0..self.n_points() {
            for (j, &a) in axes.iter().enumerate() {
                for c in 0..d {
                    jac[(c, j)] = self.node_derivative(slice, p, a, c, &strides);
                }
            }
            let v = if y_only { small_op_norm(&jac) } else { jac.norm() };
            best = best.max(v);
        }
        best
    }
}

/// `sup |v| + sup |∇v|` of a values array laid out like `grid.values`.
pub fn h_norm_of(grid: &FieldGrid, values: &[f64]) -> f64 {
    let n = grid.slice_len();
    let sup = sup_abs_vec(values, grid.d);
    let grad = values.chunks(n).map(|s| grid.slice_grad_sup(s, false)).fold(0.0, f64::max);
    sup + grad
}

fn sup_abs_vec(values: &[f64], d: usize) -> f64 {
    values.chunks(d).map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

/// Operator norm, closed form up to `2×2`.
pub(crate) fn small_op_norm(a: &Mat) -> f64 {
    match a.shape() {
        (1, 1) => a[(0, 0)].abs(),
        (2, 2) => {
            let f2 = a.norm_squared();
            let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            ((f2 + (f2 * f2 - 4.0 * det * det).max(0.0).sqrt()) / 2.0).sqrt()
        }
        _ => crate::linalg::op_norm(a),
    }
}

/// Cell index `i` and fraction `t ∈ [0, 1]` with `v ≈ (1-t) nodes[i] + t nodes[i+1]`,
/// clamped to the node range.
pub(crate) fn locate(nodes: &[f64], v: f64) -> (usize, f64) {
    let n = nodes.len();
    if n == 1 || v <= nodes[0] {
        return (0, 0.0);
    }
    if v >= nodes[n - 1] {
        return (n - 2, 1.0);
    }
    let i = nodes.partition_point(|x| *x <= v).saturating_sub(1).min(n - 2);
    (i, (v - nodes[i]) / (nodes[i + 1] - nodes[i]))
}
