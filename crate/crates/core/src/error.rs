use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the exploration stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite bounding box coordinate")]
    NonFiniteCoordinate,

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no evidence recorded for state {state} under {signature}")]
    NoEvidence { state: String, signature: String },

    #[error("scenario `{name}` failed validation:\n  {}", .violations.join("\n  "))]
    Scenario { name: String, violations: Vec<String> },

    #[error("{}:{line}: {msg}", .path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("replay pool shortfall: requested {requested}, only {available} eligible")]
    Shortfall { requested: usize, available: usize, report: Vec<String> },

    #[error("replay prefix for {0} failed verification")]
    UnverifiedPrefix(String),

    #[error("environment fault at step {step}: {msg}")]
    EnvFault { step: usize, msg: String },

    #[error("io error on {}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad configuration or malformed inputs rather
    /// than a failure during execution.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Scenario { .. } | Error::InvalidInput(_) | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
