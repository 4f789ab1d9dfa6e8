use thiserror::Error;

pub type Result<T> = std::result::Result<T, KopiError>;

/// Broad failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum KopiError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate support: sparsity {sparsity} with p = {p} selects no variable")]
    DegenerateSupport { p: usize, sparsity: f64 },

    #[error("degenerate signal: X beta* is identically zero")]
    DegenerateSignal,

    #[error("numerical conditioning: {0}")]
    Conditioning(String),

    #[error("lasso did not converge after {iterations} sweeps (max KKT violation {violation:e})")]
    NonConvergence { iterations: usize, violation: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("null cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KopiError {
    pub fn class(&self) -> ErrorClass {
        match self {
            KopiError::InvalidParameter(_) => ErrorClass::Config,
            KopiError::DegenerateSupport { .. }
            | KopiError::DegenerateSignal
            | KopiError::InvalidInput(_)
            | KopiError::Parse { .. }
            | KopiError::EmptyDataset(_)
            | KopiError::Cache(_)
            | KopiError::Io(_)
            | KopiError::Csv(_)
            | KopiError::Json(_) => ErrorClass::Data,
            KopiError::Conditioning(_) | KopiError::NonConvergence { .. } => ErrorClass::Numerical,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> KopiError {
    KopiError::InvalidParameter(msg.into())
}
