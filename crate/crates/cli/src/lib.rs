//! Library side of the `rbhmc` binary: configuration, CSV ingestion, PCA and
//! the four subcommands.

pub mod commands;
pub mod config;
pub mod io;
pub mod pca;

pub use commands::{cmd_eval, cmd_fit, cmd_generate, cmd_pca, FitSummary};
pub use config::{Mode, RunConfig};

use std::fmt;

/// Error of a subcommand, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// bad flags or configuration (exit 1)
    Usage(String),
    /// unreadable, malformed or inconsistent input files (exit 2)
    Data(String),
    /// non-SPD matrices, vanishing weights, divergence (exit 3)
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rbhmc::Error> for CliError {
    fn from(e: rbhmc::Error) -> Self {
        if e.is_numerical() {
            return CliError::Numerical(e.to_string());
        }
        match e {
            rbhmc::Error::Param(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
