use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("record {record}: field `{field}`: {message}")]
    Malformed {
        record: usize,
        field: String,
        message: String,
    },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("tagging failed at token {index}: {message}")]
    Tagging { index: usize, message: String },

    #[error("annotation mismatch in dialogue `{dialogue}`, turn {turn}: {message}")]
    AnnotationMismatch {
        dialogue: String,
        turn: usize,
        message: String,
    },

    #[error("checkpoint does not match configuration: {0}")]
    ConfigMismatch(String),

    #[error("non-finite value at step {step}: {detail}")]
    NumericFailure { step: usize, detail: String },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(record: usize, field: &str, message: impl Into<String>) -> Self {
        Error::Malformed {
            record,
            field: field.to_string(),
            message: message.into(),
        }
    }
}
