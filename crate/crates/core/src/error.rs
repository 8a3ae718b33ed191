use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("corpus structure: {0}")]
    Structural(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown target identity `{0}`")]
    UnknownTarget(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cross-entropy is infinite: true class has probability 0")]
    InfiniteLoss,

    #[error("predictions do not cover {} face(s): {}", missing.len(), missing.join(", "))]
    Coverage { missing: Vec<String> },

    #[error("rate undefined: {0}")]
    UndefinedRate(String),

    #[error("density undefined for a graph with {0} node(s)")]
    UndefinedDensity(usize),

    #[error("inconsistent input: {0}")]
    Consistency(String),

    #[error("networks not comparable: {0}")]
    Comparison(String),

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("usage: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Process exit status: 2 for I/O, 64 for usage, 65 for data or consistency problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Usage(_) | Error::Params(_) => 64,
            _ => 65,
        }
    }
}
