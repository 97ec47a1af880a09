use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("infeasible polygon: {0}")]
    InfeasiblePolygon(String),

    #[error(
        "Cholesky factorization failed on axis {axis} at leading minor {minor} (pivot {pivot:e})"
    )]
    Factorization {
        axis: usize,
        minor: usize,
        pivot: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rectangle {lo:?}..={hi:?} exceeds sample dims {dims:?}")]
    OutOfRange {
        lo: Vec<usize>,
        hi: Vec<usize>,
        dims: Vec<usize>,
    },

    #[error("curve point {index} is outside the domain: {reason}")]
    CurveDomain { index: usize, reason: String },

    #[error("sequence is not monotone at position {0}")]
    NotMonotone(usize),

    #[error("inconsistent extremal index {theta} (must lie in (0, 1])")]
    InconsistentExtremalIndex { theta: f64 },

    #[error("split total exceeds {limit:?} on axis {index}")]
    SplitConstraint { index: usize, limit: Vec<usize> },

    #[error("exhaustive enumeration needs {sites} innovation sites (limit {limit})")]
    EnumerationTooLarge { sites: usize, limit: usize },

    #[error("model does not support this operation: {0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
