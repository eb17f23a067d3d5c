use std::path::PathBuf;

use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("{} validation error(s): {}", .0.errors.len(), .0.summary())]
    Validation(ValidationReport),

    #[error("line {line}: paragraph {key}: {reason}")]
    ParagraphInvariant {
        line: usize,
        key: String,
        reason: String,
    },

    #[error("line {line}: duplicate score key {key}")]
    DuplicateKey { line: usize, key: String },

    #[error("sample of {requested} requested from a pool of {available}")]
    PoolTooSmall { requested: usize, available: usize },

    #[error("stratum k={k} has {available} paragraphs, {required} required")]
    UndersizedStratum {
        k: usize,
        available: usize,
        required: usize,
    },

    #[error("mode {mode} is not supported for metric {metric}")]
    UnsupportedMode { metric: String, mode: String },

    #[error("missing sentence {index} of document {doc_id} for system {system_id}")]
    MissingSentence {
        system_id: String,
        doc_id: String,
        index: usize,
    },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("score tables disagree on keys; missing: {}", .0.join(", "))]
    KeyMismatch(Vec<String>),

    #[error("system key sets differ: {0}")]
    SystemMismatch(String),

    #[error("no evaluable items: {0}")]
    NoItems(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
