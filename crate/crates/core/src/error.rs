use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("{}: {cause}", path.display())]
    File { path: PathBuf, cause: io::Error },

    /// A structured text input did not match its format.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{file}: malformed markup at byte {offset}: {message}")]
    Markup { file: String, offset: u64, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("model is not labeled")]
    UnlabeledModel,

    #[error("invalid UTF-8 input")]
    Encoding,
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, cause: io::Error) -> Self {
        Error::File {
            path: path.into(),
            cause,
        }
    }
}
