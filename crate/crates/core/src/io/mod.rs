//! File formats: TOML configs, line-delimited session logs, ATE reports,
//! sweep tables and SVG error plots.

pub mod config;
pub mod manifest;
pub mod report;
pub mod session_log;
pub mod svg;
pub mod tables;

use thiserror::Error;

use crate::model::{ConfigError, DatasetError};

pub use config::{ConfigFile, SimulationSection, SweepSection, VariantEntry};
pub use manifest::RunManifest;
pub use report::{AteReport, ReportRow};
pub use session_log::{read_session_log, read_session_log_manifest, write_session_log};

/// Version of the session-log, report and table layouts.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("config: {0}")]
    Toml(String),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("config: variant '{0}' has no gamma")]
    MissingGamma(String),
    #[error("config: variant name '{0}' appears twice")]
    DuplicateName(String),
    #[error("config: no [sweep] section")]
    MissingSweep,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Dataset {
        line: usize,
        #[source]
        source: DatasetError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FormatError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse {
            line,
            message: message.into(),
        }
    }
}

/// Shortest round-trip decimal form; empty for absent values.
pub(crate) fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}
