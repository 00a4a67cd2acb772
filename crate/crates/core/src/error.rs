use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the geometry, loss, voting and pose routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("direction vector norm {norm:e} is below {min:e}")]
    DegenerateDirection { norm: f64, min: f64 },

    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("insufficient support: need at least {needed} masked pixels, have {have}")]
    InsufficientSupport { needed: usize, have: usize },

    #[error("no valid hypothesis could be formed (all sampled pairs parallel)")]
    NoValidHypothesis,

    #[error("too few points: need at least {needed}, have {have}")]
    TooFewPoints { needed: usize, have: usize },

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(&'static str),

    #[error("empty point set")]
    EmptyPointSet,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            msg: err.to_string(),
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
