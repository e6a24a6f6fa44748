use std::path::PathBuf;

use crate::model::{MotionSegment, PathologyTask};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("inconsistent dimension: {first} then {other}")]
    InconsistentDimension { first: usize, other: usize },

    #[error("invalid value in record {key}: {value}")]
    InvalidValue { key: String, value: f64 },

    #[error("missing embedding for {0}")]
    MissingEmbedding(String),

    #[error("incomplete labels: no {task} label for {report_id} {segment}")]
    IncompleteLabels {
        report_id: String,
        segment: MotionSegment,
        task: PathologyTask,
    },

    #[error("class {class_index} out of range for {task} (arity {arity})")]
    ClassOutOfRange {
        task: PathologyTask,
        class_index: usize,
        arity: usize,
    },

    #[error("degenerate split: {task} class {class_index} has no training instances")]
    DegenerateSplit { task: PathologyTask, class_index: usize },

    #[error("fraction {0} outside (0, 1)")]
    InvalidFraction(f64),

    #[error("total variation {0} outside [0, 1]")]
    InvalidTotalVariation(f64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
