use thiserror::Error;

/// Errors raised by the estimators, simulators and file readers.
#[derive(Debug, Error)]
pub enum SpardaError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("matrix is not positive definite: {0}")]
    Factorization(String),

    #[error("singular covariate Gram matrix; covariates are collinear or constant within classes")]
    SingularCovariates,

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = SpardaError> = std::result::Result<T, E>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(SpardaError::Dimension(msg.into()))
}
