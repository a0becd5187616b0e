use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad shapes, unknown names, invalid parameter values.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called outside its contract.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
