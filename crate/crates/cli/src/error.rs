//! CLI error type and its mapping onto process exit codes.

use std::path::PathBuf;

use nkf_core::error::AecError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numeric(String),
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.into(),
            reason: err.to_string(),
        }
    }

    /// 1 for bad configuration, 2 for numerical failure, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

impl From<AecError> for CliError {
    fn from(err: AecError) -> Self {
        match err {
            AecError::Numerical(msg) => CliError::Numeric(msg),
            AecError::Io { path, source } => CliError::io(path, source),
            AecError::Format { path, reason } => CliError::Io { path, reason },
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_codes() {
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(CliError::from(AecError::io("/x", io)).exit_code(), 3);
        assert_eq!(CliError::from(AecError::Numerical("nan".into())).exit_code(), 2);
        assert_eq!(CliError::from(AecError::config("bad")).exit_code(), 1);
        assert_eq!(CliError::from(AecError::shape("3x4")).exit_code(), 1);
        let fmt = AecError::Format {
            path: "/w".into(),
            reason: "truncated".into(),
        };
        assert_eq!(CliError::from(fmt).exit_code(), 3);
    }
}
