use thiserror::Error;

#[derive(Debug, Error)]
pub enum BfnError {
    /// A time or parameter lies outside the region where a formula is defined.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Training(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BfnError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(BfnError::Domain(msg.into()))
}

pub(crate) fn argument<T>(msg: impl Into<String>) -> Result<T> {
    Err(BfnError::Argument(msg.into()))
}
