use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The body held no well-formed link entries but was not blank.
    #[error("body is not a link-format TimeMap ({skipped} malformed entries)")]
    HardParseFailure { skipped: usize },

    #[error("invalid URI: {0}")]
    InvalidUri(String),

    #[error("snapshots belong to different resources: {left} vs {right}")]
    MismatchedResource { left: String, right: String },

    #[error("trace contains no resources or no days")]
    EmptyTrace,

    #[error("series for {uri_r} has {found} days, trace expects {expected}")]
    RaggedTrace { uri_r: String, found: usize, expected: usize },

    #[error("curve needs at least two points, got {0}")]
    ShortCurve(usize),

    #[error("invalid generator config: {0}")]
    InvalidConfig(String),

    #[error("invalid archive rule on line {line}: {reason}")]
    InvalidRule { line: usize, reason: String },

    #[error("corrupt store entry {path}: {reason}")]
    CorruptStore { path: PathBuf, reason: String },

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
