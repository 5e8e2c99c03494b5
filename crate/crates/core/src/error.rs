use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the data pipeline, model, trainer and evaluators.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value is outside the documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data violates an invariant (NaN pixels, negative radiance, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// An expected file or directory is missing.
    #[error("not found: {0}")]
    NotFound(PathBuf),

    /// An image file exists but cannot be decoded.
    #[error("decode error for {path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },

    /// A text file (exposure list, config, ablation matrix) failed to parse.
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    /// Model/checkpoint/train configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Training produced a non-finite loss; diagnostic state was dumped.
    #[error("non-finite loss at epoch {epoch}, step {step}; state dumped to {dump:?}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        dump: Option<PathBuf>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
