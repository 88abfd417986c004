//! Localized drifts `b^{[m]}_t(z) = b_{t∧m}(z) ψ(|z|/m)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::DriftSpec;
use crate::rng::probe_points;

/// `max |ψ'|` of the quintic blend.
const PSI_SLOPE: f64 = 1.875;
const SUP_PROBES: usize = 4096;

/// `1` on `[0, 1]`, `0` on `[2, ∞)`, quintic smoothstep in between.
pub fn psi(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let x = r - 1.0;
        1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
    }
}

/// The cutoff drift at level `m_level`. The declared regularity and growth
/// carry over (they hold on `|z| ≤ m`, where the drifts agree). Without a
/// declared bound the sup is estimated on probes of the ball of radius `2m`.
pub fn cutoff_drift(b: &DriftSpec, m_level: usize) -> Result<DriftSpec> {
    if m_level == 0 {
        return Err(Error::param("m_level", "must be at least 1"));
    }
    let level = m_level as f64;
    let inner = b.evaluator();
    let eval = Arc::new(move |t: f64, z: &[f64], out: &mut [f64]| {
        let w = psi(crate::linalg::norm(z) / level);
        if w == 0.0 {
            out.fill(0.0);
            return;
        }
        inner(t.min(level), z, out);
        out.iter_mut().for_each(|v| *v *= w);
    });
    let mut c = DriftSpec::new(format!("{}[m={m_level}]", b.name), b.m, b.d, eval)
        .with_regularity(b.alpha, b.k, b.modulus.clone());
    c.y_lipschitz = b.y_lipschitz;
    c.ell = b.ell;
    c.h = b.h;
    let sup = match b.sup_bound {
        Some(s) => s,
        None => {
            let mut out = vec![0.0; b.d];
            let mut best = 0.0_f64;
            for z in probe_points(SUP_PROBES, b.m + b.d, 2.0 * level) {
                for t in [0.0, 0.5 * level, level] {
                    c.eval_into(t, &z, &mut out);
                    best = best.max(crate::linalg::norm(&out));
                }
            }
            best
        }
    };
    c.sup_bound = Some(sup);
    if let (Some(l), Some(s)) = (b.lipschitz, b.sup_bound) {
        c.lipschitz = Some(l + PSI_SLOPE * s / level);
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_plateaus_and_blend() {
        assert_eq!(psi(0.0), 1.0);
        assert_eq!(psi(1.0), 1.0);
        assert_eq!(psi(2.0), 0.0);
        assert_eq!(psi(7.0), 0.0);
        let mut prev = 1.0;
        for i in 1..100 {
            let v = psi(1.0 + i as f64 / 100.0);
            assert!(v < prev);
            prev = v;
        }
        // steepest at the midpoint
        let h = 1e-6;
        assert!(((psi(1.5 - h) - psi(1.5 + h)) / (2.0 * h) - PSI_SLOPE).abs() < 1e-6);
    }

    #[test]
    fn cutoff_agrees_inside_and_vanishes_outside() {
        let b = DriftSpec::new("lin", 1, 1, Arc::new(|t, z: &[f64], o: &mut [f64]| o[0] = z[0] + 2.0 * z[1] + t));
        let c = cutoff_drift(&b, 3).unwrap();
        assert_eq!(c.eval(1.0, &[1.0, 1.0]), b.eval(1.0, &[1.0, 1.0]));
        // time is frozen at m
        assert_eq!(c.eval(10.0, &[1.0, 1.0]), b.eval(3.0, &[1.0, 1.0]));
        assert_eq!(c.eval(0.0, &[6.0, 0.0]), vec![0.0]);
        assert_eq!(c.eval(0.0, &[5.0, 5.0]), vec![0.0]);
        let sup = c.sup_bound.unwrap();
        assert!(sup.is_finite() && sup > 0.0);
    }

    #[test]
    fn radial_magnitude_decreases_monotonically() {
        let b = DriftSpec::constant(1, vec![1.0]);
        let c = cutoff_drift(&b, 2).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..=50 {
            let r = 1.5 + 3.0 * i as f64 / 50.0;
            let v = c.eval(0.0, &[r / 2f64.sqrt(), r / 2f64.sqrt()])[0].abs();
            assert!(v <= prev);
            prev = v;
        }
        assert_eq!(c.lipschitz, Some(PSI_SLOPE / 2.0));
    }
}
