use thiserror::Error;

#[derive(Debug, Error)]
pub enum DocreError {
    #[error("parse error at record {record}: {message}")]
    Parse { record: usize, message: String },

    #[error("unknown relation label {label:?}")]
    Schema { label: String },

    #[error("validation error in {doc_id:?}: {message}")]
    Validation { doc_id: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DocreError>;
