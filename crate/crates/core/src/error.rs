use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the runtime.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: coordinate ({x}, {y}) outside the {width}x{height} sensor")]
    OutOfBounds {
        line: usize,
        x: i64,
        y: i64,
        width: u32,
        height: u32,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("need at least {needed} label samples for cubic interpolation, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not a weight file (bad magic {found:?})")]
    BadMagic { found: [u8; 4] },

    #[error("weight file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("weight file truncated: {0}")]
    Truncated(String),

    #[error("malformed weight file: {0}")]
    Format(String),

    #[error("unknown config key `{key}`; valid keys: {valid}")]
    UnknownKey { key: String, valid: String },

    #[error("config key `{key}`: {message}")]
    ConfigValue { key: String, message: String },

    #[error("no training windows: every session is shorter than the {window_ms} ms window")]
    NoWindows { window_ms: usize },

    #[error("no steps observed yet")]
    NoSteps,

    #[error("event at t={t_us} us is ahead of the open bin {open_bin}")]
    FutureEvent { t_us: u64, open_bin: u64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
