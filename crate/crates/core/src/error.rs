use thiserror::Error;

/// Errors produced by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent arguments (dimension mismatch, zero direction, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A requested window or time lies outside the sampled horizon.
    #[error("range error: {0}")]
    Range(String),

    /// Subspaces are not complementary, or a projection pair cannot be formed.
    #[error("geometry error: {message} (condition number {condition:.3e})")]
    Geometry { message: String, condition: f64 },

    /// The adaptive-law integration produced a non-finite state.
    #[error("divergence at step {step} (t = {time}): non-finite state")]
    Divergence { step: usize, time: f64 },

    /// Malformed signal file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn range<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Range(msg.into()))
}
