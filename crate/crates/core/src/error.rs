use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("empty population")]
    EmptyPopulation,
    #[error("cannot select {requested} individuals out of {available} candidates")]
    SelectionOverflow { requested: usize, available: usize },
    #[error("mixed objective arities: expected {expected}, found {found} at index {index}")]
    MixedArity {
        expected: usize,
        found: usize,
        index: usize,
    },
    #[error("unknown lineage node {0}")]
    UnknownNode(usize),
    #[error("prior index {index} registered twice as a QD seed")]
    DuplicateSeed { index: usize },
    #[error("root tagged with prior index {index}, but only {count} candidates exist")]
    RootOutOfRange { index: usize, count: usize },
    #[error("evaluation of node {node} failed: {source}")]
    Evaluation {
        node: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("only {found} distinct mazes of side {n} could be generated, {requested} requested")]
    InsufficientMazes {
        n: usize,
        requested: usize,
        found: usize,
    },
    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    /// True for errors caused by user-supplied configuration rather than by a
    /// failure during the run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig { .. } | Error::InsufficientMazes { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
