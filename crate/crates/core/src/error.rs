use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("need at least {needed} observations, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("resolution level {level} out of range (must satisfy {constraint})")]
    LevelOutOfRange { level: usize, constraint: String },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("unknown signal `{0}`")]
    UnknownSignal(String),

    #[error("cannot parse noise spec `{0}`")]
    ParseNoise(String),

    #[error("malformed pyramid: {0}")]
    MalformedPyramid(String),

    #[error("risk table row for n = {n} has nonpositive risk {risk}")]
    NonPositiveRisk { n: usize, risk: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("{path}: plotting failed: {message}")]
    Plot { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
