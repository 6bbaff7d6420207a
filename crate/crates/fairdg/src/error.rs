use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: shape mismatch, non-normalized distribution, bad ids.
    #[error("validation error: {0}")]
    Validation(String),
    /// A conditioning event has zero probability mass, or every cell of a
    /// partition was skipped.
    #[error("degenerate conditioning: {0}")]
    Degenerate(String),
    /// An operation was called outside its contract (wrong loss kind,
    /// unsorted front, ...).
    #[error("contract error: {0}")]
    Contract(String),
    /// Invalid configuration value.
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
