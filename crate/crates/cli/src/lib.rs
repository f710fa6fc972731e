//! Experiment driver for the reaction-subdiffusion reconstruction library.

pub mod config;
pub mod experiment;
pub mod expr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("scheme failure: {0}")]
    Scheme(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Scheme(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<subdiff_core::Error> for CliError {
    fn from(e: subdiff_core::Error) -> Self {
        match e {
            subdiff_core::Error::InvalidConfig(msg) => CliError::Config(msg),
            other => CliError::Scheme(other.to_string()),
        }
    }
}

pub use config::ExperimentConfig;
