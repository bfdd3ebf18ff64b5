use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the model, oracle and data layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("batch is empty")]
    EmptyBatch,

    #[error("{what} must be a hard 0/1 state")]
    SoftState { what: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("exact enumeration refused: {what} = {size} exceeds limit {limit}")]
    SizeCap {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("{op} requires a {expected} ensemble")]
    WrongFamily {
        op: &'static str,
        expected: &'static str,
    },

    #[error("unknown synthetic shape `{0}` (expected arc, ring, segments or cross)")]
    UnknownShape(String),

    #[error("{}: bad magic number {found:#010x}, expected {expected:#010x}", path.display())]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{}: truncated at byte offset {offset} (needed {needed} more bytes)", path.display())]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
    },

    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("class {class} has {available} examples, {required} required")]
    InsufficientClass {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("labels span fewer than two classes")]
    DegenerateLabels,

    #[error("dataset is unlabeled")]
    MissingLabels,

    #[error("{}: checksum mismatch (expected {expected}, got {actual})", path.display())]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
