//! The `fedmed` command line: generate cohorts, run federated workflows, audit message logs.

pub mod audit;
pub mod generate;
pub mod manifest;
pub mod run;

use std::fmt;

use fedmed::FedError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_POLICY: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_AUDIT: i32 = 5;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::new(EXIT_CONFIG, message)
    }

    pub fn io(context: &str, e: impl fmt::Display) -> Self {
        CliError::new(EXIT_IO, format!("{context}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<FedError> for CliError {
    fn from(e: FedError) -> Self {
        let code = if e.is_policy() {
            EXIT_POLICY
        } else if e.is_numeric() {
            EXIT_NUMERIC
        } else {
            match e {
                FedError::PayloadInvalid(_) | FedError::InvalidPolicy(_) | FedError::InvalidComputeSpec(_) => EXIT_CONFIG,
                FedError::GatewayFailure { .. } | FedError::Stats(_) | FedError::Survival(_) | FedError::Pca(_) => EXIT_NUMERIC,
                _ => EXIT_IO,
            }
        };
        CliError::new(code, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
