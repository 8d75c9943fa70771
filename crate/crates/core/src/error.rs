use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("dialogues with fewer than 2 utterances: {}", .0.join(", "))]
    DialogueTooShort(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("instance `{instance}`: only {available} distinct negatives available, need {needed}")]
    InsufficientNegatives {
        instance: String,
        available: usize,
        needed: usize,
    },

    #[error("non-finite score for candidate {index} of `{instance}`")]
    NonFinite { instance: String, index: usize },

    #[error("`{id}`: expected {expected} values, found {found}")]
    LengthMismatch {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("`{id}`: value {value} outside [0, 1]")]
    OutOfRange { id: String, value: f64 },

    #[error("missing records for ids: {}", .0.join(", "))]
    MissingIds(Vec<String>),

    #[error("no candidate set for ids: {}", .0.join(", "))]
    UnknownIds(Vec<String>),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
