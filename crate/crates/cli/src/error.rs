//! CLI error split: configuration problems exit with code 2, numerical
//! failures with code 3.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad config file, missing paths, malformed data files, I/O trouble.
    Config(String),
    /// Model fitting or linear algebra failed.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<gpkit_core::Error> for CliError {
    fn from(e: gpkit_core::Error) -> Self {
        match e {
            gpkit_core::Error::InvalidInput(_) | gpkit_core::Error::DimensionMismatch(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
