use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error")]
    Io(#[from] io::Error),

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },

    #[error("label {label} out of range at row {row} (K = {num_classes})")]
    LabelOutOfRange {
        row: usize,
        label: i64,
        num_classes: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty batch")]
    EmptyBatch,

    #[error("truncated payload: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: usize, got: usize },

    #[error("trailing bytes: {0} unexpected bytes after payload")]
    TrailingBytes(usize),

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("unknown tag {tag} for {what}")]
    UnknownTag { what: &'static str, tag: u8 },

    #[error("cosine distance undefined for zero-norm vector")]
    ZeroNorm,

    #[error("temperatures require euclidean distance, got {0}")]
    IncompatibleScheme(&'static str),

    #[error("invalid temperature scheme: {0}")]
    InvalidTemperatures(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Diverged { iteration: usize, loss: f64 },

    #[error("malformed trace: {0}")]
    MalformedTrace(String),
}
