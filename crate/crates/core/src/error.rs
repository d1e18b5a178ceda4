use thiserror::Error;

/// Errors produced by the fermentation twin library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}, column `{column}`: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("validation error at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("sampler error: {message} (state = {state:?})")]
    Sampler { message: String, state: Vec<f64> },

    #[error("sensor error: {0}")]
    Sensor(String),

    #[error("chain file error: {0}")]
    ChainFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
