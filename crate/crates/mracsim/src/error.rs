//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of operands do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A state or derived quantity stopped being finite during integration.
    /// Carries the simulation time at which the overflow was detected.
    #[error("numeric overflow at t = {t} s: {what}")]
    Overflow { t: f64, what: String },

    /// A linear solve could not be completed (singular system).
    #[error("solver failure: {0}")]
    Solver(String),

    /// A configuration is internally inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Scenario validation failed; every failed check is listed.
    #[error("scenario validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    /// A scenario or summary file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// File I/O while reading or writing experiment artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV encoding or decoding of trace files.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
