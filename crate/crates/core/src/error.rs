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

    #[error("taxonomy line {line}: {message}")]
    Taxonomy { line: usize, message: String },

    #[error("unknown label `{0}` (taxonomy corruption)")]
    UnknownLabel(String),

    #[error("html parse error at byte {offset}: {message}")]
    Html { offset: usize, message: String },

    #[error("statement in {doc} has no paragraph content")]
    EmptyStatement { doc: String },

    #[error("vector file line {line}: {message}")]
    Vectors { line: usize, message: String },

    #[error("index {index} out of range for vocabulary of {size}")]
    IndexOutOfRange { index: u32, size: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("invalid probability distribution: {0}")]
    Distribution(String),

    #[error("non-finite gradient at parameter {0}")]
    NonFiniteGradient(usize),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("confusion matrix line {line}: {message}")]
    ConfusionFormat { line: usize, message: String },

    #[error("archive {path}: {message}")]
    Archive { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
