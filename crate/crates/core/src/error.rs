use thiserror::Error;

use crate::model::PhaseState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("Euler chart singularity: |sin(beta)| = {sin_beta:e} is below the guard {guard:e}")]
    ChartSingularity { sin_beta: f64, guard: f64 },

    #[error("no real solution ({equation}): {reason}")]
    Domain {
        equation: &'static str,
        reason: String,
    },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last iterates {last:?})")]
    NoConvergence { iterations: usize, last: [f64; 2] },

    #[error("non-finite state at step {step}: {snapshot:?}")]
    NonFinite { step: u64, snapshot: Box<PhaseState> },

    #[error("spectral analysis error: {0}")]
    Spectral(String),

    #[error("trajectory format error: {0}")]
    Format(String),

    #[error("fingerprint mismatch: trajectory carries {stored}, embedded config hashes to {computed}")]
    FingerprintMismatch { stored: String, computed: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
