use thiserror::Error;

/// Hypothesis labels on the linear part of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Hypothesis {
    /// Invertible noise covariance.
    H1,
    /// Invertible `BB*` plus the intertwining relation with a witness `A0`.
    H2,
    /// Self-adjoint `A2` with summable spectrum.
    H3,
    /// Galerkin projections commute with `B` and `A1`.
    H4,
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Hypothesis::H1 => "H1",
            Hypothesis::H2 => "H2",
            Hypothesis::H3 => "H3",
            Hypothesis::H4 => "H4",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid modulus: {0}")]
    InvalidModulus(String),

    #[error("hypothesis {hypothesis} violated: {detail}")]
    HypothesisViolation { hypothesis: Hypothesis, detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    #[error("capability error: {0}")]
    Capability(String),

    #[error("singular Gramian: condition number {condition:.3e} exceeds 1e14")]
    SingularGramian { condition: f64 },

    #[error("lambda too small: contraction factor >= 1 for 3 consecutive iterations at lambda = {lambda}; try lambda = {suggested}")]
    LambdaTooSmall { lambda: f64, suggested: f64 },

    #[error("transform not invertible: sup |grad_y u| = {grad_sup:.4} >= 1")]
    NotInvertible { grad_sup: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("trajectory leaves the field box at t = {time} (coordinate {axis} = {value})")]
    Coverage { time: f64, axis: usize, value: f64 },

    #[error("evaluator failure: {0}")]
    Evaluator(String),

    #[error("config error in `{field}`: {detail}")]
    Config { field: String, detail: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidParameter { name, detail: detail.into() }
    }

    pub(crate) fn violation(hypothesis: Hypothesis, detail: impl Into<String>) -> Self {
        Error::HypothesisViolation { hypothesis, detail: detail.into() }
    }

    pub(crate) fn config(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config { field: field.into(), detail: detail.into() }
    }
}
