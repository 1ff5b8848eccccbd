use std::path::PathBuf;

use thiserror::Error;

use crate::model::Diagnostic;

#[derive(Debug, Error)]
pub enum Error {
    #[error("arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("state spaces differ")]
    SpaceMismatch,

    #[error("size cap exceeded: {what} needs {needed} entries, limit is {limit}")]
    SizeCap {
        what: &'static str,
        needed: usize,
        limit: usize,
    },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unknown builtin model `{0}`")]
    UnknownModel(String),

    #[error("model validation failed: {}", format_diagnostics(.0))]
    InvalidModel(Vec<Diagnostic>),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

fn format_diagnostics(d: &[Diagnostic]) -> String {
    d.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
