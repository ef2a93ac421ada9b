use std::io;

use thiserror::Error;

/// Every failure the toolkit can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("{path}: {source}")]
    File { path: String, source: io::Error },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("label hierarchy violated on line {line}: {msg}")]
    Hierarchy { line: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("class `{0}` has no examples")]
    EmptyClass(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error("vocabulary hash mismatch: model has {expected}, vocabulary has {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("config: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
