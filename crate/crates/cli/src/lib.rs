//! Library side of the `pfsi` binary: configuration, subcommands and output writers.

pub mod commands;
pub mod config;
pub mod output;

use pfsi_core::FsiError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(#[from] FsiError),
    #[error("output error: {0}")]
    Output(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const SOLVER: i32 = 2;
    pub const CENSORED: i32 = 3;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Solver(FsiError::StaleCache { .. }) | CliError::Solver(FsiError::Cache(_)) => {
                exit::CONFIG
            }
            CliError::Solver(FsiError::InvalidParameter { .. }) => exit::CONFIG,
            CliError::Solver(_) | CliError::Output(_) => exit::SOLVER,
        }
    }
}
