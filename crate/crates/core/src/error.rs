use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Pade order m = {0} is outside the supported range 1..=8")]
    UnsupportedOrder(usize),

    #[error("alpha = {0} must lie strictly inside (0, 1)")]
    InvalidAlpha(f64),

    #[error("denominator roots are clustered (relative gap {gap:.3e}); partial fractions are ill-conditioned")]
    IllConditionedPoles { gap: f64 },

    #[error("root finding for the Pade denominator failed: {0}")]
    RootFinding(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("mesh nodes must be strictly increasing (violated at index {index})")]
    NonMonotoneNodes { index: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("grid functions live on different operators")]
    OperatorMismatch,

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("{method} did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("non-positive error value {0} in convergence order")]
    NonPositiveError(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
