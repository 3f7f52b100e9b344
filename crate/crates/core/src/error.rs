use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the signal chain, the filters, and the trainer.
#[derive(Debug, Error)]
pub enum AecError {
    #[error("empty input")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("index out of range: {what} = {index}, limit {limit}")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AecError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AecError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        AecError::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        AecError::InvalidConfig(msg.into())
    }
}

pub type Result<T, E = AecError> = std::result::Result<T, E>;
