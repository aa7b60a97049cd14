use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bit/hex encodings of genomes and plates.
    #[error("encoding error: {0}")]
    Encoding(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Sample statistics that are undefined for the given data.
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("evaluator error for particle {particle}: {source}")]
    Particle {
        particle: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("evaluator error: {0}")]
    Evaluator(String),

    #[error("unknown evaluator `{name}` (known: {})", known.join(", "))]
    UnknownEvaluator { name: String, known: Vec<String> },

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// The innermost error, looking through row and particle wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Row { source, .. } | Error::Particle { source, .. } => source.root(),
            other => other,
        }
    }
}
