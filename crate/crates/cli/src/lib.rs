//! Batch front end of the IDSA laboratory: `idsa-lab run <config-file>`.
//!
//! A run reads a flat `key = value` configuration, executes one experiment
//! and writes CSV tables plus `manifest.json` (and `error.json` on failure)
//! into `output_dir`.

use std::path::PathBuf;

pub mod config;
pub mod output;
pub mod run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {message}")]
    Config { key: Option<String>, message: String },

    #[error("solver failure: {message}")]
    Solver { message: String },

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Solver { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Solver { .. } => "solver",
            CliError::Io { .. } => "io",
        }
    }
}

impl From<idsa_core::Error> for CliError {
    /// Bad input rejected by the library is a configuration error.
    fn from(e: idsa_core::Error) -> Self {
        if e.is_solver_failure() {
            CliError::Solver { message: e.to_string() }
        } else {
            CliError::Config {
                key: None,
                message: e.to_string(),
            }
        }
    }
}
