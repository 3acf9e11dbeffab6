use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad category of a failure. Frontends map these onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    InputData,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// `1 - g * theta <= 0`; the betting factor left the wealth-preserving region.
    #[error("log-loss domain error: 1 - g*theta = {factor} (g = {outcome}, theta = {theta})")]
    Domain { outcome: f64, theta: f64, factor: f64 },

    #[error("invalid bound d = {0}: the bound on |g| must be finite and > 0")]
    InvalidBound(f64),

    #[error("degenerate bound: {0}")]
    DegenerateBound(String),

    #[error("wealth factor {factor} <= 0 at step {step} (violation policy: abort)")]
    WealthViolation { step: usize, factor: f64 },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::UnknownPreset(_) => ErrorClass::Config,
            Error::InvalidInput(_)
            | Error::InvalidBound(_)
            | Error::DegenerateBound(_)
            | Error::Parse { .. }
            | Error::MissingColumn { .. }
            | Error::Io { .. } => ErrorClass::InputData,
            Error::Domain { .. } | Error::WealthViolation { .. } | Error::Serialize(_) => {
                ErrorClass::Numerical
            }
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be finite, got {value}")))
    }
}
