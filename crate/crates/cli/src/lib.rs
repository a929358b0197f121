//! Command-line front end. Every command is a thin wrapper over one library call, so results
//! are bit-identical to the library invoked with the same inputs and seed.

pub mod args;
mod commands;
mod io;

use std::fmt;

pub use args::Cli;
pub use commands::run;

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad inputs: unreadable files, malformed graphs, invalid data or options. Exit 1.
    Validation(String),
    /// A numerical procedure failed on valid inputs. Exit 2.
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Estimation(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Estimation(m) => write!(f, "estimation failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<mswig_core::GraphError> for CliError {
    fn from(e: mswig_core::GraphError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<mswig_stats::StatsError> for CliError {
    fn from(e: mswig_stats::StatsError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Estimation(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(format!("json: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("io: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
