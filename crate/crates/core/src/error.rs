use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("malformed file {context}: {message}")]
    Format { context: String, message: String },

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("out-of-vocabulary token `{0}`")]
    OutOfVocabulary(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("undefined cosine: zero vector")]
    UndefinedCosine,

    #[error("zero variance")]
    ZeroVariance,

    #[error("non-finite value during training: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("not enough data: {0}")]
    NotEnoughData(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }
}
