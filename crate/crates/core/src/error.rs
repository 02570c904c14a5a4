//! Crate-wide error type.

/// Errors produced by parsers, codecs, the tensor engine and the trainers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown sensor preset '{0}'")]
    UnknownPreset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed KITTI record stream: {byte_len} bytes is not a multiple of 16")]
    MalformedKittiRecord { byte_len: usize },

    #[error("parse error at line {line}: {msg}")]
    CarlaParse { line: usize, msg: String },

    #[error("bad magic in {0} file")]
    BadMagic(&'static str),

    #[error("truncated file: expected {expected} more bytes, got {got}")]
    Truncated { expected: usize, got: usize },

    #[error("grid dimensions overflow: {rows} x {cols}")]
    DimensionOverflow { rows: u32, cols: u32 },

    #[error("empty grids cannot be serialized")]
    EmptyGrid,

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("numeric fault: {0}")]
    NumericFault(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("sample domain '{0}' is empty")]
    EmptyDomain(&'static str),

    #[error("backward called before forward")]
    BackwardBeforeForward,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
