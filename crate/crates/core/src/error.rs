use std::fmt;

/// Errors produced by the kernel, estimator, adaptation and sampling routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient samples for unbiased estimator: need at least {needed}, got {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("episode {index}: {source}")]
    Episode {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

/// Structured parse failure for embedding files. `offset` is a byte offset
/// for binary input and a 1-based line number for CSV input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatError {
    pub offset: usize,
    pub kind: FormatErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormatErrorKind {
    BadMagic,
    UnsupportedVersion(u8),
    Truncated { needed: usize },
    Inconsistent(String),
    Csv(String),
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FormatErrorKind::BadMagic => write!(f, "bad magic at byte {}", self.offset),
            FormatErrorKind::UnsupportedVersion(v) => {
                write!(f, "unsupported version {v} at byte {}", self.offset)
            }
            FormatErrorKind::Truncated { needed } => {
                write!(f, "truncated input at byte {}: {needed} more bytes expected", self.offset)
            }
            FormatErrorKind::Inconsistent(msg) => write!(f, "{msg} (at byte {})", self.offset),
            FormatErrorKind::Csv(msg) => write!(f, "csv line {}: {msg}", self.offset),
        }
    }
}

impl std::error::Error for FormatError {}

pub type Result<T, E = Error> = std::result::Result<T, E>;
