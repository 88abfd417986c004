//! Finite truncations of the degenerate linear system and the checks of the
//! structural hypotheses H1–H4.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Hypothesis, Result};
use crate::linalg::{self, Mat, Vector};

/// Margin below which a singular value counts as zero.
pub const INVERTIBILITY_TOL: f64 = 1e-10;
/// Admissible intertwining residual `‖B e^{tA2} - e^{tA1} e^{tA0} B‖`.
pub const INTERTWINING_TOL: f64 = 1e-8;
pub const INTERTWINING_TIMES: [f64; 3] = [0.1, 0.5, 1.0];
const SIGMA_SAMPLE_TIMES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

pub type SigmaFn = Arc<dyn Fn(f64) -> Mat + Send + Sync>;

/// Noise coefficient `σ_t` (`d × k`).
#[derive(Clone)]
pub enum Sigma {
    Constant(Mat),
    TimeDependent { rows: usize, cols: usize, f: SigmaFn },
}

impl fmt::Debug for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sigma::Constant(m) => write!(f, "Sigma::Constant({}x{})", m.nrows(), m.ncols()),
            Sigma::TimeDependent { rows, cols, .. } => write!(f, "Sigma::TimeDependent({rows}x{cols})"),
        }
    }
}

impl Sigma {
    pub fn at(&self, t: f64) -> Mat {
        match self {
            Sigma::Constant(m) => m.clone(),
            Sigma::TimeDependent { f, .. } => f(t),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Sigma::Constant(m) => (m.nrows(), m.ncols()),
            Sigma::TimeDependent { rows, cols, .. } => (*rows, *cols),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Sigma::Constant(_))
    }
}

/// Rule producing eigenvalues beyond the truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TailRule {
    None,
    /// `λ_i ≈ coeff · i^exponent`.
    PowerLaw { coeff: f64, exponent: f64 },
}

impl TailRule {
    /// `Σ_{i > n} λ_i^{-p}` by Euler–Maclaurin on the power law, or `None`
    /// if there is no rule or the sum diverges.
    pub fn tail_sum(&self, n: usize, p: f64) -> Option<f64> {
        match *self {
            TailRule::None => None,
            TailRule::PowerLaw { coeff, exponent } => {
                let q = exponent * p;
                if q <= 1.0 {
                    return None;
                }
                let n = n as f64;
                // Σ_{i>n} i^{-q} ≈ ∫_n^∞ x^{-q} dx - n^{-q}/2 + q n^{-q-1}/12
                let s = n.powf(1.0 - q) / (q - 1.0) - 0.5 * n.powf(-q) + q * n.powf(-q - 1.0) / 12.0;
                Some(coeff.powf(-p) * s.max(0.0))
            }
        }
    }

    pub fn eigenvalue(&self, i: usize) -> Option<f64> {
        match *self {
            TailRule::None => None,
            TailRule::PowerLaw { coeff, exponent } => Some(coeff * (i as f64).powf(exponent)),
        }
    }
}

/// Finite truncation `(A1, A2, B, A0, σ, λ, δ)` of the degenerate system
/// `dX = (A1 X + B Y) dt`, `dY = (A2 Y + b(X, Y)) dt + σ dW`.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    pub a1: Mat,
    pub a2: Mat,
    pub b: Mat,
    /// Witness for the intertwining `B e^{tA2} = e^{tA1} e^{tA0} B`.
    pub a0: Option<Mat>,
    pub sigma: Sigma,
    pub delta: f64,
    /// `Some` for the spectral family `A2 = -diag(λ)`.
    pub eigenvalues: Option<Vec<f64>>,
    pub tail: TailRule,
}

impl SpectralModel {
    pub fn new(a1: Mat, a2: Mat, b: Mat, a0: Option<Mat>, sigma: Sigma) -> Result<Self> {
        let m = a1.nrows();
        let d = a2.nrows();
        if !a1.is_square() || !a2.is_square() {
            return Err(Error::param("A1/A2", "must be square"));
        }
        if b.shape() != (m, d) {
            return Err(Error::param("B", format!("expected {m}x{d}, got {}x{}", b.nrows(), b.ncols())));
        }
        if let Some(a0) = &a0 {
            if a0.shape() != (m, m) {
                return Err(Error::param("A0", format!("expected {m}x{m}")));
            }
        }
        if sigma.shape().0 != d || sigma.shape().1 == 0 {
            return Err(Error::param("sigma", format!("expected {d} rows and at least one column")));
        }
        Ok(SpectralModel { a1, a2, b, a0, sigma, delta: 0.5, eigenvalues: None, tail: TailRule::None })
    }

    /// Spectral family `A1 = A2 = -diag(λ)`, `B = I`, `A0 = 0`.
    pub fn spectral(eigenvalues: Vec<f64>, sigma: Sigma, delta: f64, tail: TailRule) -> Result<Self> {
        let n = eigenvalues.len();
        if n == 0 {
            return Err(Error::param("eigenvalues", "need at least one mode"));
        }
        let diag = Mat::from_diagonal(&Vector::from_iterator(n, eigenvalues.iter().map(|l| -l)));
        let mut model = SpectralModel::new(diag.clone(), diag, Mat::identity(n, n), Some(Mat::zeros(n, n)), sigma)?;
        model.delta = delta;
        model.eigenvalues = Some(eigenvalues);
        model.tail = tail;
        Ok(model)
    }

    /// Scalar kinetic model `A1 = A2 = 0`, `B = 1`, `σ = 1`.
    pub fn kinetic_scalar() -> Self {
        SpectralModel::new(
            Mat::zeros(1, 1),
            Mat::zeros(1, 1),
            Mat::identity(1, 1),
            Some(Mat::zeros(1, 1)),
            Sigma::Constant(Mat::identity(1, 1)),
        )
        .expect("valid kinetic model")
    }

    pub fn m(&self) -> usize {
        self.a1.nrows()
    }

    pub fn d(&self) -> usize {
        self.a2.nrows()
    }

    /// Number of driving Brownian motions.
    pub fn k(&self) -> usize {
        self.sigma.shape().1
    }

    pub fn dim(&self) -> usize {
        self.m() + self.d()
    }

    pub fn is_spectral(&self) -> bool {
        self.eigenvalues.is_some()
    }

    /// Block generator `[[A1, B], [0, A2]]`.
    pub fn generator(&self) -> Mat {
        let (m, d) = (self.m(), self.d());
        let mut g = Mat::zeros(m + d, m + d);
        g.view_mut((0, 0), (m, m)).copy_from(&self.a1);
        g.view_mut((0, m), (m, d)).copy_from(&self.b);
        g.view_mut((m, m), (d, d)).copy_from(&self.a2);
        g
    }

    /// Noise input `[0; σ_t]` (`(m+d) × k`).
    pub fn noise_input(&self, t: f64) -> Mat {
        let (m, d) = (self.m(), self.d());
        let mut g = Mat::zeros(m + d, self.k());
        g.view_mut((m, 0), (d, self.k())).copy_from(&self.sigma.at(t));
        g
    }

    /// `σ_t^T (σ_t σ_t^T)^{-1}` (`k × d`), or an H1 violation.
    pub fn sigma_pseudo_inverse(&self, t: f64) -> Result<Mat> {
        let s = self.sigma.at(t);
        let ss = &s * s.transpose();
        if linalg::min_singular_value(&ss) < INVERTIBILITY_TOL {
            return Err(Error::violation(Hypothesis::H1, format!("sigma sigma^T is singular at t = {t}")));
        }
        let inv = ss.try_inverse().ok_or_else(|| Error::violation(Hypothesis::H1, "sigma sigma^T not invertible"))?;
        Ok(s.transpose() * inv)
    }

    pub fn intertwining_residual(&self, t: f64) -> Option<f64> {
        let a0 = self.a0.as_ref()?;
        let lhs = &self.b * linalg::expm_scaled(&self.a2, t);
        let rhs = linalg::expm_scaled(&self.a1, t) * linalg::expm_scaled(a0, t) * &self.b;
        Some(linalg::op_norm(&(lhs - rhs)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub hypothesis: Hypothesis,
    pub passed: bool,
    pub measured: Vec<(String, f64)>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<HypothesisCheck>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, h: Hypothesis) -> &HypothesisCheck {
        self.checks.iter().find(|c| c.hypothesis == h).expect("every hypothesis is checked")
    }

    pub fn measured(&self, h: Hypothesis, key: &str) -> Option<f64> {
        self.get(h).measured.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// First failing hypothesis as an error.
    pub fn require(&self) -> Result<()> {
        match self.checks.iter().find(|c| !c.passed) {
            None => Ok(()),
            Some(c) => Err(Error::violation(c.hypothesis, c.detail.clone())),
        }
    }
}

/// Report-only check of H1–H4 on a finite truncation.
pub fn validate_hypotheses(model: &SpectralModel) -> ValidationReport {
    ValidationReport { checks: vec![check_h1(model), check_h2(model), check_h3(model), check_h4(model)] }
}

fn check_h1(model: &SpectralModel) -> HypothesisCheck {
    let margin = SIGMA_SAMPLE_TIMES
        .iter()
        .map(|t| {
            let s = model.sigma.at(*t);
            linalg::min_singular_value(&(&s * s.transpose()))
        })
        .fold(f64::INFINITY, f64::min);
    let passed = margin >= INVERTIBILITY_TOL;
    HypothesisCheck {
        hypothesis: Hypothesis::H1,
        passed,
        measured: vec![("min_singular_sigma_sigma_t".into(), margin)],
        detail: if passed { "sigma sigma^T invertible at sampled times".into() } else { format!("sigma sigma^T singular (margin {margin:.3e})") },
    }
}

fn check_h2(model: &SpectralModel) -> HypothesisCheck {
    let bbt = &model.b * model.b.transpose();
    let margin = linalg::min_singular_value(&bbt);
    let mut measured = vec![("min_singular_bbt".to_string(), margin)];
    let mut problems = Vec::new();
    if margin < INVERTIBILITY_TOL {
        problems.push(format!("B B^T singular (margin {margin:.3e})"));
    }
    match model.a0 {
        None => problems.push("no A0 witness for the intertwining relation".to_string()),
        Some(_) => {
            let res = INTERTWINING_TIMES
                .iter()
                .map(|t| model.intertwining_residual(*t).unwrap_or(f64::INFINITY))
                .fold(0.0, f64::max);
            measured.push(("intertwining_residual".into(), res));
            if !(res <= INTERTWINING_TOL) {
                problems.push(format!("intertwining residual {res:.3e} exceeds {INTERTWINING_TOL:e}"));
            }
        }
    }
    HypothesisCheck {
        hypothesis: Hypothesis::H2,
        passed: problems.is_empty(),
        measured,
        detail: if problems.is_empty() { "B B^T invertible, intertwining holds".into() } else { problems.join("; ") },
    }
}

fn check_h3(model: &SpectralModel) -> HypothesisCheck {
    let asym = linalg::max_abs_diff(&model.a2, &model.a2.transpose());
    let scale = model.a2.amax().max(1.0);
    let mut measured = vec![("a2_asymmetry".to_string(), asym)];
    let mut problems = Vec::new();
    if asym > 1e-12 * scale {
        problems.push("A2 is not self-adjoint".to_string());
    }
    if !(model.delta > 0.0 && model.delta < 1.0) {
        problems.push(format!("delta = {} outside (0, 1)", model.delta));
    }
    if let Some(lams) = &model.eigenvalues {
        measured.push(("lambda_1".into(), lams[0]));
        if !(lams[0] > 0.0) {
            problems.push("lambda_1 must be positive".into());
        }
        if lams.windows(2).any(|w| w[1] < w[0]) {
            problems.push("eigenvalues must be nondecreasing".into());
        }
        let p = 1.0 - model.delta;
        let head: f64 = lams.iter().map(|l| l.powf(-p)).sum();
        measured.push(("truncated_sum".into(), head));
        match model.tail {
            TailRule::None => {}
            rule => match rule.tail_sum(lams.len(), p) {
                Some(t) => measured.push(("tail_sum".into(), t)),
                None => problems.push(format!("tail rule gives a divergent sum of lambda_i^(delta-1) at delta = {}", model.delta)),
            },
        }
    }
    let detail = if !problems.is_empty() {
        problems.join("; ")
    } else if model.is_spectral() {
        "A2 self-adjoint with summable spectrum".into()
    } else {
        "finite-dimensional A2 is self-adjoint; summability is automatic".into()
    };
    HypothesisCheck { hypothesis: Hypothesis::H3, passed: problems.is_empty(), measured, detail }
}

fn check_h4(model: &SpectralModel) -> HypothesisCheck {
    let d = model.d();
    let mut worst: f64 = 0.0;
    if model.is_spectral() {
        for n in 1..=d {
            let mut p2 = Mat::zeros(d, d);
            for i in 0..n {
                p2[(i, i)] = 1.0;
            }
            let p1 = linalg::column_span_projector(&(&model.b * &p2));
            worst = worst.max(linalg::op_norm(&(&p1 * &model.b - &model.b * &p2)));
            worst = worst.max(linalg::op_norm(&(&p1 * &model.a1 - &model.a1 * &p1)));
        }
    }
    let passed = worst <= INTERTWINING_TOL;
    HypothesisCheck {
        hypothesis: Hypothesis::H4,
        passed,
        measured: vec![("projection_commutation_residual".into(), worst)],
        detail: if passed { "Galerkin projections commute with B and A1".into() } else { format!("projection commutation residual {worst:.3e}") },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinetic_model_passes_everything() {
        let d = 2;
        let model = SpectralModel::new(
            Mat::zeros(d, d),
            Mat::zeros(d, d),
            Mat::identity(d, d),
            Some(Mat::zeros(d, d)),
            Sigma::Constant(Mat::identity(d, d)),
        )
        .unwrap();
        assert!(validate_hypotheses(&model).all_pass());
    }

    #[test]
    fn zero_coupling_fails_h2() {
        let model = SpectralModel::new(
            Mat::zeros(1, 1),
            Mat::zeros(1, 1),
            Mat::zeros(1, 1),
            Some(Mat::zeros(1, 1)),
            Sigma::Constant(Mat::identity(1, 1)),
        )
        .unwrap();
        let r = validate_hypotheses(&model);
        assert!(!r.get(Hypothesis::H2).passed);
        assert!(r.get(Hypothesis::H1).passed);
        assert!(matches!(r.require(), Err(Error::HypothesisViolation { hypothesis: Hypothesis::H2, .. })));
    }

    #[test]
    fn missing_witness_fails_h2() {
        let mut model = SpectralModel::kinetic_scalar();
        model.a0 = None;
        assert!(!validate_hypotheses(&model).get(Hypothesis::H2).passed);
    }

    #[test]
    fn power_tail_sum_matches_direct_sum() {
        let rule = TailRule::PowerLaw { coeff: 1.0, exponent: 2.0 };
        let direct: f64 = (11..200_000).map(|i| (i as f64).powi(-2)).sum();
        let approx = rule.tail_sum(10, 1.0).unwrap();
        assert!((approx - direct).abs() < 1e-5);
        assert!(rule.tail_sum(10, 0.4).is_none());
    }
}
