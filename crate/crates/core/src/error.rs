use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("learned subspace is degenerate (all singular values shrunk to zero)")]
    DegenerateSubspace,

    #[error("invalid training set: {0}")]
    InvalidTrainingSet(String),

    #[error("box ({x:.2}, {y:.2}, {w:.2}, {h:.2}) does not overlap the {frame_w}x{frame_h} frame")]
    OutOfFrame {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        frame_w: usize,
        frame_h: usize,
    },

    #[error("localization failed: every candidate scored infinite")]
    LocalizationFailure,

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("sequence directory {0} has no frames")]
    EmptySequence(PathBuf),

    #[error("failed to decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("{frames} frames but {boxes} ground-truth boxes")]
    CountMismatch { frames: usize, boxes: usize },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn input(reason: impl Into<String>) -> Self {
        Error::InvalidInput(reason.into())
    }
}
