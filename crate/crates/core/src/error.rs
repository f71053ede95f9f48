use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("state became non-finite at step {step}")]
    Overflow { step: usize },

    #[error("experiment diverged: state became non-finite at step {step}")]
    ExperimentDiverged { step: usize },

    #[error("certificate violated: ||X0*G_K - I||_F = {residual:e} exceeds {tolerance:e}")]
    CertificateViolation { residual: f64, tolerance: f64 },

    #[error("X0 is rank deficient (rank {rank} < n = {n})")]
    RankDeficient { rank: usize, n: usize },

    #[error("validation failed for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("no feasible design found")]
    NotFound,

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
