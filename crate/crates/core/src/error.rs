use std::path::PathBuf;

/// Errors raised by the reconstruction library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("margin {margin} too large for a {width}x{height} image")]
    MarginTooLarge { margin: usize, width: usize, height: usize },

    #[error("patch size {patch} exceeds image size {width}x{height}")]
    PatchTooLarge { patch: usize, width: usize, height: usize },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("cannot read {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("data term misuse: {0}")]
    DataTermMode(String),

    #[error("tape is stale: parameters changed since the forward pass")]
    StaleTape,

    #[error("trajectory was rolled out without recording tapes")]
    MissingTape,

    #[error("the semi-implicit scheme requires the identity forward operator")]
    SchemeRequiresIdentity,

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("sinkhorn kernel underflow in row {row}; increase beta (currently {beta})")]
    KernelUnderflow { row: usize, beta: f64 },

    #[error("empty batch: {0}")]
    EmptyBatch(String),

    #[error("non-finite gradient in {0}")]
    NanGradient(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(expected: impl ToString, actual: impl ToString) -> Error {
    Error::ShapeMismatch {
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
