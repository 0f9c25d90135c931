use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum MevError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error("empty interval: no records with year in [{start}, {end}]")]
    EmptyInterval { start: i32, end: i32 },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("duplicate date {date} at row {row}")]
    DuplicateDate { row: usize, date: String },

    #[error("negative amount {amount} at row {row}")]
    NegativeAmount { row: usize, amount: f64 },

    #[error("non-finite value in output: {0}")]
    NonFiniteValue(String),

    #[error("too many failed replicates: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MevError>;
