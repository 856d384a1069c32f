use std::path::Path;

use sharing_effects::io::FormatError;
use sharing_effects::{EstimateError, SimulationError, SweepError};
use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Io(_) => 4,
            CliError::Numeric(_) => 5,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn format(path: &Path, err: FormatError) -> Self {
        match err {
            FormatError::Io(e) => CliError::io(path, e),
            other => CliError::Config(format!("{}: {other}", path.display())),
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(err: SimulationError) -> Self {
        match err {
            SimulationError::CapExceeded { .. } => CliError::Numeric(err.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<EstimateError> for CliError {
    fn from(err: EstimateError) -> Self {
        if err.is_degenerate() {
            CliError::Numeric(err.to_string())
        } else {
            CliError::Config(err.to_string())
        }
    }
}

impl From<SweepError> for CliError {
    fn from(err: SweepError) -> Self {
        match err {
            SweepError::InvalidPlan(msg) => CliError::Config(format!("invalid sweep plan: {msg}")),
            other => CliError::Numeric(other.to_string()),
        }
    }
}
