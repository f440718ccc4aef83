//! Command-line error reporting.
//!
//! Every failure exits nonzero and prints one machine-readable JSON object
//! on stderr: `{"error":{"kind":...,"field":...,"message":...}}`. Config
//! problems carry the offending field so scripts can point at the exact
//! setting.

use std::path::PathBuf;

use thiserror::Error;

/// Any failure after argument parsing.
#[derive(Debug, Error)]
pub enum CliError {
    /// A resolved configuration value is invalid.
    #[error("invalid config: {field}: {detail}")]
    Config {
        /// Dotted field, section, or source that is invalid.
        field: String,
        /// What is wrong with it.
        detail: String,
    },
    /// A file or stream could not be read or written.
    #[error("{path}: {detail}")]
    Io {
        /// The offending path.
        path: PathBuf,
        /// Operating-system detail.
        detail: String,
    },
    /// An input record could not be parsed.
    #[error("{path}:{line}: {detail}")]
    Data {
        /// The file holding the record.
        path: PathBuf,
        /// 1-based line number.
        line: usize,
        /// Parse or validation detail.
        detail: String,
    },
    /// A command failed while running.
    #[error("{detail}")]
    Run {
        /// Failure description from the underlying component.
        detail: String,
    },
}

impl CliError {
    /// Wraps any component error as a run failure.
    pub fn run(err: impl std::fmt::Display) -> CliError {
        CliError::Run { detail: err.to_string() }
    }

    /// The stderr JSON object for this error.
    pub fn to_json(&self) -> String {
        let kind = match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Data { .. } => "data",
            CliError::Run { .. } => "run",
        };
        let field = match self {
            CliError::Config { field, .. } => Some(field.as_str()),
            _ => None,
        };
        serde_json::json!({
            "error": {
                "kind": kind,
                "field": field,
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}
