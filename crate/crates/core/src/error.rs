use thiserror::Error;

/// Errors raised by the numerical builders and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("factor index {index} out of range for a space with {len} factors")]
    FactorOutOfRange { index: usize, len: usize },

    #[error("factor {index} is not a {expected} factor")]
    WrongFactorKind { index: usize, expected: &'static str },

    #[error("matter factor {index} has dimension {dim}, expected 2")]
    NotTwoLevel { index: usize, dim: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("operator is not unitary (max deviation {0:e})")]
    NotUnitary(f64),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no profile stored for point `{0}`")]
    MissingProfile(String),

    #[error("detector frequency {detector} does not match transition frequency {transition} (|diff| = {diff:e})")]
    FrequencyMismatch { detector: f64, transition: f64, diff: f64 },

    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
