//! Command implementations behind the `drt` binary.
//!
//! Every command reads one JSON configuration and writes its artefacts into an
//! output directory. Reruns with the same configuration produce identical bytes.

pub mod commands;
pub mod config;

use thiserror::Error;

pub use config::{parse_run_config, RunConfig};

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] drt_core::Error),

    #[error("invalid configuration JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
