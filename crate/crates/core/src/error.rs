use std::io;

use thiserror::Error;

/// Errors surfaced by every stage of the pipeline.
///
/// Messages are prefixed with the stage that raised them so that the CLI can
/// print them verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("feature-io: line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("feature-io: {0}")]
    Validation(String),
    #[error("format: {0}")]
    Format(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("config: {0}")]
    Config(String),
    #[error("vocoder: {0}")]
    Vocoder(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
