use std::path::PathBuf;

use chrono::{DateTime, Utc};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: line {line}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp {
        path: PathBuf,
        line: u64,
        timestamp: DateTime<Utc>,
    },

    #[error("{path}: line {line}: gap in hourly series, missing {first_missing} .. {last_missing}")]
    Gap {
        path: PathBuf,
        line: u64,
        first_missing: DateTime<Utc>,
        last_missing: DateTime<Utc>,
    },

    #[error("{path}: line {line}: {message}")]
    Validation {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: missing config key `{key}`")]
    MissingKey { path: PathBuf, key: String },

    #[error("config: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("solver diverged: {0}")]
    SolverDiverged(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("mass balance violated: residual {residual:.6e} m3 exceeds {limit:.6e} m3")]
    MassBalance { residual: f64, limit: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

impl Error {
    /// True for errors caused by bad input files, flags or configuration, as
    /// opposed to failures while computing.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::InvalidInput(_)
            | Error::InsufficientData(_)
            | Error::Parse { .. }
            | Error::DuplicateTimestamp { .. }
            | Error::Gap { .. }
            | Error::Validation { .. }
            | Error::MissingKey { .. }
            | Error::Config(_)
            | Error::DimensionMismatch(_)
            | Error::Io { .. }
            | Error::Format(_) => true,
            Error::AtStep { source, .. } => source.is_input_error(),
            Error::Fit(_) | Error::SolverDiverged(_) | Error::MassBalance { .. } => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
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
