//! Error type shared across the engine.

use thiserror::Error;

/// Unified error for data loading, model fitting, optimization, and reporting.
#[derive(Debug, Error)]
pub enum Error {
    /// A row in an input file could not be parsed.
    #[error("parse error in {file} line {line}: {msg}")]
    Parse { file: String, line: u64, msg: String },

    /// A value in an input file parsed but is invalid.
    #[error("data error in {file} line {line}: {msg}")]
    Data { file: String, line: u64, msg: String },

    /// Per-ticker files could not be aligned onto a shared calendar.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// Not enough history before the requested date.
    #[error("insufficient history for {context}: need {needed}, have {available}")]
    History {
        needed: usize,
        available: usize,
        context: String,
    },

    /// Dimension mismatch between related inputs.
    #[error("shape error: {0}")]
    Shape(String),

    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// Model fitting failed.
    #[error("fit error: {0}")]
    Fit(String),

    /// The optimizer failed to reach the requested tolerance.
    #[error("solver error: {0}")]
    Solver(String),

    /// The rebalance schedule could not be constructed.
    #[error("schedule error: {0}")]
    Schedule(String),

    /// A configuration key is missing, unknown, or out of range.
    #[error("config error ({key}): {msg}")]
    Config { key: String, msg: String },

    /// A performance statistic is undefined on the given ledger.
    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
