use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: String, actual: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("filter support {support} does not fit a grid of side {side}")]
    FilterSupport { support: usize, side: usize },

    #[error("invalid filter bank: {0}")]
    InvalidBank(String),

    #[error("invalid energy spec: {0}")]
    InvalidSpec(String),

    #[error("energy labels do not match the spec: {0}")]
    LabelMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("descent diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(expected: impl std::fmt::Debug, actual: impl std::fmt::Debug) -> Self {
        Error::Dimension {
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }
}
