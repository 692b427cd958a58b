use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid raster dimensions {channels}x{height}x{width}")]
    InvalidDimensions {
        channels: usize,
        height: usize,
        width: usize,
    },

    #[error("expected {expected} values for the raster, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("value {value} at flat index {index} is outside [{min}, {max}]")]
    OutOfRange {
        index: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },

    #[error("malformed label value {value} at row {row}, col {col}{}", path_suffix(.path))]
    MalformedLabel {
        value: u8,
        row: usize,
        col: usize,
        path: Option<PathBuf>,
    },

    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("labeled images without a prediction: {}", .ids.join(", "))]
    MissingPredictions { ids: Vec<String> },

    #[error("degenerate disparity: mean absolute deviation from the median is zero")]
    DegenerateDisparity,

    #[error("degenerate activation: channel {channel} has zero variance")]
    DegenerateActivation { channel: usize },

    #[error("image {height}x{width} is too small for {scales} scale levels")]
    TooSmallForScales { height: usize, width: usize, scales: usize },

    #[error("kernel `{0}` is not differentiable and cannot be gradient-checked")]
    UnsupportedKernel(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("empty sample after trimming {trimmed} of {len} values from each tail")]
    EmptyAfterTrim { len: usize, trimmed: usize },

    #[error("no paired differences available: {0}")]
    EmptyDataset(String),

    #[error("study config: {0}")]
    Schema(String),
}

fn path_suffix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!(" in {}", p.display()),
        None => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
