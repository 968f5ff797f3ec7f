//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image is empty")]
    EmptyImage,

    #[error("pixel buffer length {len} does not match {height}x{width}")]
    BadPixelCount {
        height: usize,
        width: usize,
        len: usize,
    },

    #[error("operation requires a square image, got {height}x{width}")]
    NonSquare { height: usize, width: usize },

    #[error("shift ({dx}, {dy}) out of range for side {side} (|dx|,|dy| must be <= {max})")]
    ShiftOutOfRange {
        dx: i64,
        dy: i64,
        side: usize,
        max: usize,
    },

    #[error("crop plan inconsistent with image: {0}")]
    BadCropPlan(String),

    #[error("sinogram shape mismatch: {0}")]
    SinogramShape(String),

    #[error("gain vector has {actual} entries, expected {expected} (one per detector bin)")]
    GainLength { expected: usize, actual: usize },

    #[error("invalid distortion spec: {0}")]
    InvalidSpec(String),

    #[error("tensor shape mismatch: {0}")]
    TensorShape(String),

    #[error("backward requires a scalar loss, got shape {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("label {label} out of range for {classes} classes at instance {index}")]
    InvalidLabel {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("batch size must be even when a target domain is present, got {0}")]
    OddBatchSize(usize),

    #[error("cannot split {n} items into {k} folds")]
    BadFoldCount { n: usize, k: usize },

    #[error("target dataset given but domain-adversarial training is disabled")]
    TargetWithoutDann,

    #[error("dataset has no samples")]
    EmptyDataset,

    #[error("not an npy file (bad magic)")]
    NpyMagic,

    #[error("unsupported npy version {0}.{1}")]
    NpyVersion(u8, u8),

    #[error("malformed npy header: {0}")]
    NpyHeader(String),

    #[error("unsupported npy dtype {0:?} (expected uint8)")]
    NpyDtype(String),

    #[error("archive is missing key {0:?}")]
    MissingKey(String),

    #[error("malformed zip archive: {0}")]
    Zip(String),

    #[error("missing dataset copy {name:?}: expected {path:?}; run `ringadapt generate` first")]
    MissingDataset { name: String, path: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("incompatible data: {0}")]
    Incompatible(String),

    #[error("self-check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 I/O, 3 config, 4 data compatibility, 1 other.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Io(_) | Zip(_) | NpyMagic | NpyVersion(..) | NpyHeader(_) | NpyDtype(_)
            | MissingKey(_) | MissingDataset { .. } => 2,
            Config(_) | Json(_) | InvalidSpec(_) => 3,
            Incompatible(_) | InvalidLabel { .. } | GainLength { .. } | SinogramShape(_)
            | TensorShape(_) | BadCropPlan(_) | NonSquare { .. } | ShiftOutOfRange { .. } => 4,
            _ => 1,
        }
    }
}
