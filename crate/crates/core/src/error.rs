use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("config error: {0}")]
    Config(String),

    /// A backward pass was requested without the matching forward context.
    #[error("state error: {0}")]
    State(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Training produced a non-finite value.
    #[error("numeric abort: {0}")]
    Numeric(String),

    #[error(transparent)]
    Wav(#[from] WavError),

    #[error(transparent)]
    Index(#[from] IndexError),

    #[error(transparent)]
    Store(#[from] StoreError),

    #[error("{path}: {source}")]
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
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WavError {
    #[error("malformed wav header at offset {offset}: {reason}")]
    Malformed { offset: usize, reason: String },

    #[error("unsupported wav codec at offset {offset}: {reason}")]
    Unsupported { offset: usize, reason: String },

    #[error("truncated wav data at offset {offset}: expected {expected} bytes, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("index is missing required column `{0}`")]
    MissingColumn(String),

    #[error("index row {row}: {reason}")]
    BadRow { row: usize, reason: String },

    #[error("index parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("bad magic {found:?}, expected \"ACLN\"")]
    BadMagic { found: [u8; 4] },

    #[error("unknown model format version {0}")]
    UnknownVersion(u16),

    #[error("payload short by {0} bytes")]
    Truncated(usize),

    #[error("malformed model file: {0}")]
    Malformed(String),

    #[error("tensor `{name}` has shape {found:?}, config requires {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}
