use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator, the metrics toolkit and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("source frames do not cover [{start_us}, {end_us}] us (covered: [{covered_start_us}, {covered_end_us}))")]
    Coverage {
        start_us: f64,
        end_us: f64,
        covered_start_us: u64,
        covered_end_us: u64,
    },

    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {actual_w}x{actual_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },

    #[error("frame timestamp {got_us} us is not after the previous frame at {prev_us} us")]
    NonIncreasingTimestamp { prev_us: u64, got_us: u64 },

    #[error("at least {required} source frames are required, got {got}")]
    TooFewFrames { required: usize, got: usize },

    #[error("window {window}x{window} does not fit into a {width}x{height} image")]
    WindowTooLarge {
        window: usize,
        width: usize,
        height: usize,
    },

    #[error("sequence length mismatch: {left} vs {right} frames")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid frame data: {0}")]
    InvalidFrame(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
