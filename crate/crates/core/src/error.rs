use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SandboxError {
    /// The interpreter cannot be used at all. This is a harness problem and
    /// is never turned into a model penalty.
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("sandbox io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("outcome matrix has no problems")]
    EmptyMatrix,
    #[error("problem {problem} has {found} candidates, expected {expected}")]
    ShapeMismatch {
        problem: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line_no}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line_no: usize,
        reason: String,
    },
    #[error("unknown task name {0:?}")]
    UnknownTaskName(String),
    #[error("problem id {0:?} appears in both train and test splits")]
    SplitLeak(String),
    #[error("unknown dataset id {0:?}")]
    UnknownDataset(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}
