use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate an operation's preconditions (dimension mismatch, empty list, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A numeric argument is outside the function's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("featureless frame: image has zero intensity variance")]
    FeaturelessFrame,

    /// Invalid synthetic scene description.
    #[error("scene spec error: {0}")]
    Spec(String),

    #[error("config error: {0}")]
    Config(String),

    /// Nothing to process: no input frames, or none could be read.
    #[error("{0}")]
    NoInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    #[cfg_attr(not(feature = "pipeline"), allow(dead_code))]
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
