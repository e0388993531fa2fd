use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("mask has no background pixels")]
    AllForeground,
    #[error("coordinate ({row}, {col}) outside {height}x{width} image")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("mask has no boundary (empty or full)")]
    NoBoundary,
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("weight map sums to zero")]
    DegenerateWeights,
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("network expects {expected} input channels, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("file not found: {}", .0.display())]
    FileMissing(PathBuf),
    #[error("image grid {image:?} does not match label grid {label:?}")]
    GridMismatch { image: Vec<u16>, label: Vec<u16> },
    #[error("label {0} does not occur in the label volume")]
    UnknownLabel(i64),
    #[error("no cached weight map for key {0}")]
    CacheMiss(String),
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        detail: String,
    },
    #[error("test split is empty")]
    EmptyTestSplit,
    #[error("train split is empty")]
    EmptyTrainSplit,
    #[error("interaction budget must be at least 1")]
    InvalidBudget,
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Nifti(#[from] nifti::NiftiError),
}

impl Error {
    pub(crate) fn shape(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::ShapeMismatch { expected, actual }
    }
}

pub(crate) fn ensure_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::shape(expected, actual))
    }
}
