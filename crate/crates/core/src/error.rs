use std::path::PathBuf;

/// Errors raised anywhere in the library.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed image header: {0}")]
    MalformedHeader(String),

    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),

    #[error("unsupported image format")]
    UnsupportedFormat,

    #[error("pixel buffer of length {len} does not match {width}x{height}")]
    InvalidDimensions { width: usize, height: usize, len: usize },

    #[error("channel size mismatch")]
    ChannelMismatch,

    #[error("affine map is not invertible (determinant {0})")]
    NonInvertible(f64),

    #[error("empty signal")]
    EmptySignal,

    #[error("image too small: {0}")]
    TooSmall(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("need at least 2 classes, got {0}")]
    NotEnoughClasses(usize),

    #[error("training stopped after {epochs} epochs at mse {final_mse} without reaching goal {goal}")]
    TrainingFailed {
        epochs: usize,
        final_mse: f64,
        goal: f64,
        curve: Vec<f64>,
    },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),

    #[error("model checksum mismatch")]
    Checksum,

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error("png decode: {0}")]
    Png(String),
}

pub type Result<T> = std::result::Result<T, Error>;
