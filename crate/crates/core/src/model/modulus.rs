//! Continuity moduli and their classification into the Dini-type classes
//! `D0 ⊃ D2 ⊃ D1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;

/// A continuity modulus `φ: [0, ∞) → [0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Modulus {
    /// `K s^α`.
    Power { k: f64, alpha: f64 },
    /// `K / log(c + 1/s)^(1+r)`.
    LogPower { k: f64, c: f64, r: f64 },
    /// `K / sqrt(log(c + 1/s))`.
    LogSqrt { k: f64, c: f64 },
    /// Log-log interpolated table of `(s, φ(s))`, power-law extrapolated below
    /// the first node and held constant beyond the last.
    Table { points: Vec<(f64, f64)> },
}

/// How a class verdict was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictBasis {
    ClosedForm,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub in_d0: bool,
    pub in_d1: bool,
    pub in_d2: bool,
    /// `∫_{quad_floor}^1 φ(s)/s ds`.
    pub dini_integral_value: f64,
    pub squared_concave: bool,
    pub dini_finite: bool,
    pub basis: VerdictBasis,
}

/// Points in the geometric sample grid used by the shape checks.
pub const SHAPE_GRID_POINTS: usize = 64;
const SHAPE_GRID_LO: f64 = 1e-12;
const SHAPE_GRID_HI: f64 = 1e2;
pub const CONCAVITY_TOL: f64 = 1e-10;

pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

impl Modulus {
    pub fn power(k: f64, alpha: f64) -> Self {
        Modulus::Power { k, alpha }
    }

    pub fn log_power(k: f64, c: f64, r: f64) -> Self {
        Modulus::LogPower { k, c, r }
    }

    pub fn log_sqrt(k: f64, c: f64) -> Self {
        Modulus::LogSqrt { k, c }
    }

    pub fn family_tag(&self) -> &'static str {
        match self {
            Modulus::Power { .. } => "power",
            Modulus::LogPower { .. } => "log_power",
            Modulus::LogSqrt { .. } => "log_sqrt",
            Modulus::Table { .. } => "table",
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match *self {
            Modulus::Power { k, alpha } => k * s.powf(alpha),
            Modulus::LogPower { k, c, r } => k / (c + 1.0 / s).ln().powf(1.0 + r),
            Modulus::LogSqrt { k, c } => k / (c + 1.0 / s).ln().sqrt(),
            Modulus::Table { ref points } => table_eval(points, s),
        }
    }

    /// Parameter checks plus positivity and monotonicity on the sample grid.
    /// Returns whether `φ²` passes the midpoint-concavity check.
    pub fn validate(&self) -> Result<bool> {
        let bad = |m: &str| Err(Error::InvalidModulus(m.to_string()));
        match *self {
            Modulus::Power { k, alpha } => {
                if !(k > 0.0) || !(alpha > 0.0 && alpha <= 1.0) {
                    return bad("power family needs K > 0 and alpha in (0, 1]");
                }
            }
            Modulus::LogPower { k, c, r } => {
                if !(k > 0.0) || !(c >= std::f64::consts::E) || !(r > 0.0) {
                    return bad("log_power family needs K > 0, c >= e, r > 0");
                }
            }
            Modulus::LogSqrt { k, c } => {
                if !(k > 0.0) || !(c >= std::f64::consts::E) {
                    return bad("log_sqrt family needs K > 0, c >= e");
                }
            }
            Modulus::Table { ref points } => {
                if points.len() < 2 {
                    return bad("table needs at least two points");
                }
                for w in points.windows(2) {
                    if !(w[0].0 > 0.0 && w[1].0 > w[0].0) {
                        return bad("table abscissae must be positive and increasing");
                    }
                }
                if points.iter().any(|p| !(p.1 > 0.0) || !p.1.is_finite()) {
                    return bad("table values must be positive");
                }
                let slope = (points[1].1 / points[0].1).ln() / (points[1].0 / points[0].0).ln();
                if !(slope > 0.0) {
                    return bad("table must increase over its first two nodes");
                }
            }
        }
        if self.eval(0.0) != 0.0 {
            return bad("phi(0) != 0");
        }
        let grid = geometric_grid(SHAPE_GRID_LO, SHAPE_GRID_HI, SHAPE_GRID_POINTS);
        let vals: Vec<f64> = grid.iter().map(|s| self.eval(*s)).collect();
        for (s, v) in grid.iter().zip(&vals) {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::InvalidModulus(format!("phi({s:e}) = {v} is not positive")));
            }
        }
        for (i, w) in vals.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::InvalidModulus(format!(
                    "phi decreases between s = {:e} and s = {:e}",
                    grid[i],
                    grid[i + 1]
                )));
            }
        }
        Ok(self.squared_midpoint_concave(&grid))
    }

    fn squared_midpoint_concave(&self, grid: &[f64]) -> bool {
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                let (a, b) = (grid[i], grid[j]);
                let mid = self.eval(0.5 * (a + b)).powi(2);
                let avg = 0.5 * (self.eval(a).powi(2) + self.eval(b).powi(2));
                if mid < avg - CONCAVITY_TOL {
                    return false;
                }
            }
        }
        true
    }

    /// `∫_{floor}^1 φ(s)/s ds`, computed as `∫_0^{log(1/floor)} φ(e^{-u}) du`
    /// with a 16-point Gauss–Legendre rule on each unit interval in `u`.
    pub fn dini_integral(&self, floor: f64) -> f64 {
        let upper = (1.0 / floor).ln();
        let (x, w) = gauss_legendre(16);
        let mut total = 0.0;
        let mut lo = 0.0;
        while lo < upper {
            let hi = (lo + 1.0).min(upper);
            let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            total += h * x.iter().zip(&w).map(|(xi, wi)| wi * self.eval((-(c + h * xi)).exp())).sum::<f64>();
            lo = hi;
        }
        total
    }
}

fn table_eval(points: &[(f64, f64)], s: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if s >= last.0 {
        return last.1;
    }
    let idx = if s <= first.0 {
        0
    } else {
        points.windows(2).position(|w| s >= w[0].0 && s < w[1].0).unwrap_or(0)
    };
    let (a, b) = (points[idx], points[idx + 1]);
    let slope = (b.1 / a.1).ln() / (b.0 / a.0).ln();
    (a.1.ln() + slope * (s / a.0).ln()).exp()
}

/// Decides membership in the classes `D0`, `D1`, `D2`.
///
/// Built-in families use their closed-form asymptotics: power and log-power
/// moduli are Dini, the log-sqrt modulus is not Dini but satisfies the
/// logarithmic divergence condition. Tables are classified by fitting the
/// decay of `φ(e^{-L})` in `L = log(1/s)` and marked heuristic.
pub fn classify_modulus(phi: &Modulus, quad_floor: f64) -> Result<ClassReport> {
    if !(quad_floor > 0.0 && quad_floor <= 1e-3) {
        return Err(Error::param("quad_floor", "must lie in (0, 1e-3]"));
    }
    let concave = phi.validate()?;
    let dini_integral_value = phi.dini_integral(quad_floor);
    let (dini_finite, divergence, basis) = match phi {
        Modulus::Power { .. } | Modulus::LogPower { .. } => (true, true, VerdictBasis::ClosedForm),
        Modulus::LogSqrt { .. } => (false, true, VerdictBasis::ClosedForm),
        Modulus::Table { .. } => {
            let q = log_decay_exponent(phi);
            // φ(e^{-L}) ~ L^{-q}: Dini iff q > 1; the (1 + ∫φ/s)^{-2} integral
            // diverges iff q >= 1/2.
            (q > 1.0, q >= 0.5, VerdictBasis::Heuristic)
        }
    };
    Ok(ClassReport {
        in_d0: true,
        in_d1: concave && dini_finite,
        in_d2: concave && (dini_finite || divergence),
        dini_integral_value,
        squared_concave: concave,
        dini_finite,
        basis,
    })
}

/// Fitted exponent `q` in `φ(e^{-L}) ≈ C L^{-q}` over `L ∈ [20, 640]`; power-law
/// tails (exponential decay in `L`) report a large exponent.
fn log_decay_exponent(phi: &Modulus) -> f64 {
    let ls: Vec<f64> = (0..6).map(|i| 20.0 * 2f64.powi(i)).collect();
    let ys: Vec<f64> = ls.iter().map(|l| phi.eval((-l).exp()).max(1e-300).ln()).collect();
    let xs: Vec<f64> = ls.iter().map(|l| l.ln()).collect();
    -crate::stats::ols_slope(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_power_is_d1() {
        let phi = Modulus::log_power(1.0, std::f64::consts::E.powi(3), 1.0);
        let r = classify_modulus(&phi, 1e-6).unwrap();
        assert!(r.in_d1 && r.in_d2 && r.in_d0);
        assert_eq!(r.basis, VerdictBasis::ClosedForm);
    }

    #[test]
    fn log_sqrt_is_d2_not_d1() {
        let phi = Modulus::log_sqrt(1.0, std::f64::consts::E.powi(3));
        let r = classify_modulus(&phi, 1e-6).unwrap();
        assert!(r.in_d2);
        assert!(!r.in_d1);
    }

    #[test]
    fn sqrt_modulus_dini_integral() {
        let phi = Modulus::power(1.0, 0.5);
        let floor: f64 = 1e-12;
        let r = classify_modulus(&phi, floor).unwrap();
        assert!(r.in_d1);
        // ∫_floor^1 s^{-1/2} ds = 2 (1 - sqrt(floor))
        assert_relative_eq!(r.dini_integral_value, 2.0 * (1.0 - floor.sqrt()), epsilon = 1e-12);
    }

    #[test]
    fn steep_power_fails_concavity() {
        let r = classify_modulus(&Modulus::power(1.0, 0.9), 1e-4).unwrap();
        assert!(!r.squared_concave);
        assert!(!r.in_d1 && !r.in_d2);
    }

    #[test]
    fn non_monotone_table_is_rejected() {
        let phi = Modulus::Table { points: vec![(1e-3, 0.1), (1e-2, 0.3), (1e-1, 0.2)] };
        assert!(matches!(classify_modulus(&phi, 1e-4), Err(Error::InvalidModulus(_))));
    }

    #[test]
    fn bad_floor_is_rejected() {
        assert!(classify_modulus(&Modulus::power(1.0, 0.5), 0.1).is_err());
    }

    #[test]
    fn power_law_table_is_heuristically_dini() {
        let phi = Modulus::Table { points: vec![(1e-4, 1e-2), (1e-2, 1e-1), (1.0, 1.0)] };
        let r = classify_modulus(&phi, 1e-6).unwrap();
        assert!(r.dini_finite);
        assert_eq!(r.basis, VerdictBasis::Heuristic);
    }
}
