use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Input bytes do not match the declared container layout.
    #[error("parse error: {0}")]
    Parse(String),

    /// Container is well-formed but describes something unusable (zero dims, mixed sizes).
    #[error("format error: {0}")]
    Format(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A caller violated an operation's precondition (shapes, lengths, windows).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("config error: {0}")]
    Config(String),

    /// Train/test split is inconsistent with the dataset.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("state error: {0}")]
    State(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! contract {
    ($($arg:tt)*) => {
        $crate::error::Error::Contract(format!($($arg)*))
    };
}
pub(crate) use contract;
