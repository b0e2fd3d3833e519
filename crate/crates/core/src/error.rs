use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Centered inner-product operations require the first vector to sum to zero.
    #[error("vector is not centered: |sum| = {0:e}")]
    NotCentered(f64),

    #[error("weight vector sums to zero")]
    ZeroWeights,

    /// A linear solve failed. For valid stochastic inputs this signals an
    /// internal invariant violation, not a user error.
    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("corrupt replay data: {0}")]
    CorruptBuffer(String),

    #[error("invalid environment geometry: {0}")]
    InvalidGeometry(String),

    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
