//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: ({x_min}, {y_min}, {x_max}, {y_max})")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("interpolation stride must be >= 1, got {0}")]
    BadStride(usize),
    #[error("empty video: at least one frame is required")]
    EmptyVideo,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("non-monotonic frame index: expected {expected}, got {got}")]
    NonMonotonicFrame { expected: usize, got: usize },
    #[error("micro-tube stride mismatch: expected t = {expected}, got {got}")]
    StrideMismatch { expected: usize, got: usize },
    #[error("composition steps must be >= 1")]
    BadSteps,
    #[error("future segment must start at frame {expected}, got {got}")]
    FutureGap { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{path}:{line}: {msg}")]
    Format {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
