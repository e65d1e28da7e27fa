use std::path::PathBuf;

use thiserror::Error;

/// One offending configuration key and what is wrong with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigProblem {
    pub key: String,
    pub message: String,
}

impl ConfigProblem {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("invalid BIO label `{0}` (expected `O`, `B-<class>` or `I-<class>`)")]
    InvalidLabel(String),

    #[error("invalid BIO sequence at positions {positions:?}; repair the sequence with repair_bio first")]
    InvalidBio { positions: Vec<usize> },

    #[error("alignment mismatch: {0}")]
    Alignment(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for a table of {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {}", format_problems(.0))]
    Config(Vec<ConfigProblem>),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("no contextual vectors for sentence `{sentence_id}`{}", token_suffix(*.token))]
    MissingContextual {
        sentence_id: String,
        token: Option<usize>,
    },

    #[error("translation backend: {0}")]
    Translation(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_problems(problems: &[ConfigProblem]) -> String {
    problems
        .iter()
        .map(|p| format!("`{}`: {}", p.key, p.message))
        .collect::<Vec<_>>()
        .join("; ")
}

fn token_suffix(token: Option<usize>) -> String {
    token.map(|t| format!(" (token {t})")).unwrap_or_default()
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error: 2 for I/O failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Reads a UTF-8 file, attaching the path to any I/O error.
pub fn read_to_string(path: impl AsRef<std::path::Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes a file, attaching the path to any I/O error.
pub fn write_file(path: impl AsRef<std::path::Path>, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
