use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("unsupported image format in {}: {reason}", path.display())]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("corrupt image {}: {reason}", path.display())]
    CorruptImage { path: PathBuf, reason: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: (usize, usize, usize), actual: (usize, usize, usize) },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("patch size {size} larger than image {width}x{height}")]
    PatchTooLarge { size: usize, width: usize, height: usize },

    #[error("rotation requires a square image, got {width}x{height}")]
    NotSquare { width: usize, height: usize },

    #[error("time step {t} outside 0..={horizon}")]
    StepOutOfRange { t: usize, horizon: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("image {width}x{height} not divisible by 2^{depth}")]
    NotDivisible { width: usize, height: usize, depth: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite gradient at index {index}")]
    NonFiniteGradient { index: usize },

    #[error("image smaller than the {window}x{window} SSIM window")]
    TooSmallForWindow { window: usize },

    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("empty dataset")]
    EmptyDataset,
}
