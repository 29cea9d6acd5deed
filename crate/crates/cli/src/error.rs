//! CLI-level error taxonomy. Every failure is sorted into one of three
//! categories, each with a fixed process exit code: configuration problems
//! (2), dataset problems (3), and numeric failures during computation (4).

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError::Data(message.into())
    }

    pub fn io_config(path: &Path, source: std::io::Error) -> Self {
        CliError::Config(format!("{}: {source}", path.display()))
    }

    pub fn io_data(path: &Path, source: std::io::Error) -> Self {
        CliError::Data(format!("{}: {source}", path.display()))
    }
}

/// Core errors that surface while executing a validated experiment are
/// numeric failures (the core already stamps task/batch context on them).
impl From<zofc_core::Error> for CliError {
    fn from(err: zofc_core::Error) -> Self {
        CliError::Numeric(err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
