use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain size mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid pmf: {0}")]
    InvalidPmf(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("source code carries no reference distribution (required by this backend)")]
    MissingTruth,
    #[error("string oracle is empty")]
    EmptyString,
    #[error("malformed channel: {0}")]
    InvalidChannel(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
