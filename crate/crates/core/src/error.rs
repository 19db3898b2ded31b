use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("job {0} appears more than once in a job set")]
    DuplicateJob(usize),
    #[error("oracle limit exceeded: {0}")]
    OracleLimit(String),
    #[error("unsupported scale: {0}")]
    UnsupportedScale(String),
    #[error("master backend failed: {0}")]
    Backend(String),
    #[error("decomposition made no progress: {0}")]
    NoProgress(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
