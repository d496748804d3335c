//! Command-line front end and live bridge for the warehouse simulator.

pub mod app;
pub mod hub;
pub mod replay;
pub mod report;
pub mod scenario;
pub mod serve;

use std::path::Path;

use fleet_core::sim::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Scenario(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("replay log line {line}: {reason}")]
    Log { line: usize, reason: String },
    #[error(transparent)]
    Stream(#[from] std::io::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}
