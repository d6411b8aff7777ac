use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("meta-path is not type-compatible: relation {prev} ends at type {prev_dst} but relation {next} starts at type {next_src}")]
    TypeIncompatible {
        prev: usize,
        prev_dst: usize,
        next: usize,
        next_src: usize,
    },

    #[error("meta-path must start and end at the target type {target}, got {start} -> {end}")]
    NotAnchored {
        target: usize,
        start: usize,
        end: usize,
    },

    #[error("invalid meta-path: {0}")]
    InvalidPath(String),

    #[error("homophily ratio undefined: no edges with labeled endpoints")]
    UndefinedRatio,

    #[error("no meta-path with a non-empty subgraph")]
    NoValidMetaPath,

    #[error("complexity measure undefined: centroids of classes {0} and {1} coincide")]
    CoincidentCentroids(usize, usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite loss at epoch {epoch} ({phase}) on meta-path {path}")]
    NonFiniteLoss {
        epoch: usize,
        phase: &'static str,
        path: String,
    },

    #[error("relation name collision: {0}")]
    NameCollision(String),

    #[error("infeasible generator configuration: {0}")]
    Infeasible(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by the command line to choose exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NonFiniteLoss { .. }
            | Error::UndefinedRatio
            | Error::CoincidentCentroids(..) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}
