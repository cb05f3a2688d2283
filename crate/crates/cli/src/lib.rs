//! Command-line front end: argument types, evaluation and table rendering.

pub mod args;
pub mod commands;
pub mod sweep;
pub mod table;

use std::path::PathBuf;

pub use args::Cli;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flag combination or configuration; exit code 2.
    #[error("usage: {0}")]
    Usage(String),
    /// Domain or numeric failure from the library; exit code 1.
    #[error(transparent)]
    Core(#[from] shardcalc::Error),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Rendered output and where it should go (`None` for stdout).
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub text: String,
    pub path: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<Rendered, CliError> {
    commands::dispatch(cli.command)
}
