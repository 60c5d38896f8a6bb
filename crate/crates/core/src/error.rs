use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("non-finite value at time index {t}, node {node}")]
    NonFinite { t: usize, node: usize },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate series at node {node}: {msg}")]
    Degenerate { node: usize, msg: String },

    #[error("degenerate phase {phase} at node {node}: zero standard deviation")]
    DegeneratePhase { node: usize, phase: usize },

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("index out of bounds: {0}")]
    Bounds(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Config(_) | Error::Parameter(_) | Error::Bounds(_) | Error::Json(_) => 2,
            Error::Format { .. }
            | Error::NonFinite { .. }
            | Error::Consistency(_)
            | Error::Sequencing(_)
            | Error::InsufficientData(_)
            | Error::Io { .. } => 3,
            Error::Degenerate { .. } | Error::DegeneratePhase { .. } | Error::Singularity(_) => 4,
        }
    }
}
