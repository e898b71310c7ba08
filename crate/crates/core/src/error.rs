use thiserror::Error;

/// Which end of the admissible quote interval was hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainBound {
    Lower,
    Upper,
}

impl std::fmt::Display for DomainBound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DomainBound::Lower => f.write_str("lower"),
            DomainBound::Upper => f.write_str("upper"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("maximizer for p = {p} escapes the quote domain through its {bound} bound ({limit} bp)")]
    QuoteDomain {
        p: f64,
        bound: DomainBound,
        limit: f64,
    },

    #[error("offset {delta} bp is outside the tabulated range [{lo}, {hi}]")]
    OutsideTable { delta: f64, lo: f64, hi: f64 },

    #[error("{what}: expected {expected} entries, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("at inventory q = {q}: {source}")]
    AtNode {
        q: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error("unsupported curve family: {0}")]
    FamilyMismatch(String),

    #[error("quadratic approximation: {0}")]
    Riccati(String),

    #[error("zero pivot in banded factorization at row {0}")]
    SingularPivot(usize),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_node(self, q: f64) -> Error {
        match self {
            e @ Error::AtNode { .. } => e,
            e => Error::AtNode {
                q,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
