use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty vector: dimension must be at least 1")]
    EmptyVector,

    #[error("reciprocal of zero at index {index}")]
    ZeroReciprocal { index: usize },

    #[error("non-finite value in {what} at step {step}")]
    NonFinite { what: &'static str, step: u64 },

    #[error("invalid value for `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("IDX format error: {0}")]
    Format(String),

    #[error("IDX length error: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("record is missing the `{0}` series")]
    MissingSeries(&'static str),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LabError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        LabError::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }
}
