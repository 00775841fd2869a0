use thiserror::Error;

/// Crate-wide error type. Constructor preconditions and argument checks
/// surface as `BadShape`/`BadArgument`; violations of internal contracts
/// that should be impossible through the public API surface as `Invariant`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    BadShape(String),
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::BadShape(msg.into())
    }

    pub fn arg(msg: impl Into<String>) -> Self {
        Error::BadArgument(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}
