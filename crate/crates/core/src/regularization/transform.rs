//! The transform `Θ_s(x, y) = (x, y + u_s(x, y))`, its inverse, and pointwise
//! gradient diagnostics of the field.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::{locate, small_op_norm, FieldGrid};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::Modulus;
use crate::quad;
use crate::rng::path_rng;

pub const INVERSE_TOL: f64 = 1e-10;
pub const INVERSE_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Grad2 {
    /// `d × d` Jacobian of `u_s` in the `y` coordinates.
    pub jacobian: Mat,
    /// `z` lies within one cell of the box boundary, where the stencil is
    /// one-sided or extrapolated by clamping.
    pub near_boundary: bool,
}

/// Central-difference `∇^{(2)} u_s(z)` with the local cell width as step.
pub fn field_grad2(field: &FieldGrid, s: f64, z: &[f64]) -> Result<Grad2> {
    let (m, d) = (field.m, field.d);
    if z.len() != m + d {
        return Err(Error::param("z", format!("expected length {}", m + d)));
    }
    if !field.contains(z) {
        return Err(Error::Domain(format!("point {z:?} is outside the field box")));
    }
    let mut near_boundary = false;
    for (a, nodes) in field.nodes.iter().enumerate() {
        let (i, _) = locate(nodes, z[a]);
        if i == 0 || i + 2 >= nodes.len() {
            near_boundary = true;
        }
    }
    let mut jac = Mat::zeros(d, d);
    let mut zp = z.to_vec();
    let mut zm = z.to_vec();
    let mut up = vec![0.0; d];
    let mut um = vec![0.0; d];
    for j in 0..d {
        let a = m + j;
        let nodes = &field.nodes[a];
        let (i, _) = locate(nodes, z[a]);
        let h = nodes[i + 1] - nodes[i];
        zp[a] = z[a] + h;
        zm[a] = z[a] - h;
        field.eval_into(s, &zp, &mut up);
        field.eval_into(s, &zm, &mut um);
        for c in 0..d {
            jac[(c, j)] = (up[c] - um[c]) / (2.0 * h);
        }
        zp[a] = z[a];
        zm[a] = z[a];
    }
    Ok(Grad2 { jacobian: jac, near_boundary })
}

pub fn theta_forward(field: &FieldGrid, s: f64, z: &[f64]) -> Vec<f64> {
    let m = field.m;
    let u = field.eval(s, z);
    let mut out = z.to_vec();
    for (o, v) in out[m..].iter_mut().zip(&u) {
        *o += v;
    }
    out
}

/// `sup ‖∇^{(2)} u‖` over the nodes of the time slices bracketing `s`.
fn grad2_bound_at(field: &FieldGrid, s: f64) -> f64 {
    let (ti, w) = locate(&field.times, s);
    let mut g = field.slice_grad_sup(field.slice(ti), true);
    if w > 0.0 {
        g = g.max(field.slice_grad_sup(field.slice(ti + 1), true));
    }
    g
}

/// Solves `y + u_s(x, y) = w₂` for `y` by damped fixed-point iteration,
/// with `x = w₁`.
pub fn theta_inverse(field: &FieldGrid, s: f64, w: &[f64]) -> Result<Vec<f64>> {
    let m = field.m;
    let grad = grad2_bound_at(field, s);
    if grad >= 1.0 {
        return Err(Error::NotInvertible { grad_sup: grad });
    }
    let omega = 1.0 / (1.0 + grad);
    let mut z = w.to_vec();
    let mut u = vec![0.0; field.d];
    for _ in 0..INVERSE_MAX_ITER {
        field.eval_into(s, &z, &mut u);
        let mut step = 0.0_f64;
        for (j, uj) in u.iter().enumerate() {
            let target = w[m + j] - uj;
            let next = (1.0 - omega) * z[m + j] + omega * target;
            step = step.max((next - z[m + j]).abs());
            z[m + j] = next;
        }
        if step < INVERSE_TOL {
            return Ok(z);
        }
    }
    Err(Error::Numerical(format!("inverse transform did not converge in {INVERSE_MAX_ITER} iterations")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    /// Largest sampled ratio of gradient increments to the envelope.
    pub max_ratio: f64,
    pub pairs: usize,
}

/// `min_r { r + ρ (1 + ∫_{r^δ}^1 φ(s)/s ds) }` over a logarithmic grid of `r`.
pub fn holder_envelope(phi: &Modulus, delta: f64, rho: f64) -> f64 {
    let mut best = f64::INFINITY;
    for k in 0..=48 {
        let r = 10f64.powf(-12.0 + 12.0 * k as f64 / 48.0);
        let lo = r.powf(delta);
        let integral = if lo >= 1.0 {
            0.0
        } else {
            // substitute s = e^v
            quad::adaptive(|v| phi.eval(v.exp()), lo.ln(), 0.0, 1e-12, 1e-9)
        };
        best = best.min(r + rho * (1.0 + integral));
    }
    best
}

/// Samples pairs `z, z'` inside the box (away from the boundary cells) and
/// reports the largest `‖∇^{(2)}u(z) - ∇^{(2)}u(z')‖ / envelope(|z - z'|)`.
pub fn holder_diagnostic(field: &FieldGrid, s: f64, phi: &Modulus, delta: f64, pairs: usize, seed: u64) -> Result<HolderReport> {
    let dim = field.dim();
    let lo: Vec<f64> = field.nodes.iter().map(|n| n[1]).collect();
    let hi: Vec<f64> = field.nodes.iter().map(|n| n[n.len() - 2]).collect();
    let mut max_ratio = 0.0_f64;
    for i in 0..pairs {
        let mut rng = path_rng(seed, i as u64);
        let z: Vec<f64> = (0..dim).map(|a| lo[a] + (hi[a] - lo[a]) * rng.random::<f64>()).collect();
        let scale = 10f64.powf(-3.0 * rng.random::<f64>());
        let z2: Vec<f64> = (0..dim)
            .map(|a| (z[a] + scale * (hi[a] - lo[a]) * (rng.random::<f64>() - 0.5)).clamp(lo[a], hi[a]))
            .collect();
        let rho = crate::linalg::norm(&z.iter().zip(&z2).map(|(a, b)| a - b).collect::<Vec<_>>());
        if rho == 0.0 {
            continue;
        }
        let g1 = field_grad2(field, s, &z)?.jacobian;
        let g2 = field_grad2(field, s, &z2)?.jacobian;
        let num = small_op_norm(&(g1 - g2));
        max_ratio = max_ratio.max(num / holder_envelope(phi, delta, rho));
    }
    Ok(HolderReport { max_ratio, pairs })
}
