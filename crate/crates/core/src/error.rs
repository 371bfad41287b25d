use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("singular system (pivot {pivot:e} below threshold {threshold:e})")]
    SingularSystem { pivot: f64, threshold: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("empty input")]
    EmptyInput,

    #[error("x = {x} lies outside the support ({lower}, {upper})")]
    Support { x: f64, lower: f64, upper: f64 },

    #[error("basis must contain at least one function")]
    EmptyBasis,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),

    #[error("data must be strictly positive (found {0})")]
    NonPositiveData(f64),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
