//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by map algebra, metrics, the diffusion decoder, and the
/// pipeline clients.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes or coordinates do not line up (box outside a map, mismatched
    /// map sizes, tensor channel mismatch).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A scalar argument is outside its valid range (rank out of 1..=m,
    /// diffusion step out of 0..=T).
    #[error("domain error: {0}")]
    Domain(String),

    /// The metric is mathematically undefined for this input (constant map,
    /// zero fixations, zero mass).
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// An operation that requires a non-empty collection received an empty one.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A clip or dataset is missing a component the operation needs.
    #[error("incomplete input: {0}")]
    IncompleteInput(String),

    /// A model response could not be parsed; carries the raw text so the
    /// caller can log or retry.
    #[error("parse error: {message}")]
    Parse { message: String, raw: String },

    /// A remote endpoint was unreachable or returned a malformed payload.
    #[error("transport error: {0}")]
    Transport(String),

    /// Training or sampling produced a non-finite value.
    #[error("numeric divergence: {0}")]
    Divergence(String),

    /// A dataset or generator spec is infeasible.
    #[error("spec error: {0}")]
    Spec(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
