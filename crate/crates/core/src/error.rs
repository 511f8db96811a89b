use std::fmt;

/// Library-wide error type.
#[derive(Debug)]
pub enum Error {
    /// A corpus (or batch) was empty where at least one example is required.
    EmptyCorpus,
    /// Inconsistent tensor or vector dimensions.
    DimMismatch(String),
    /// A token id outside the vocabulary range.
    TokenOutOfRange { id: usize, vocab: usize },
    /// Invalid configuration or construction argument.
    InvalidConfig(String),
    /// A malformed record in a data file; `line` is 1-based.
    BadRecord { line: usize, msg: String },
    /// A reward term was evaluated without the context it needs
    /// (e.g. CIDEr without document frequencies).
    MissingContext(String),
    /// Enumeration limits exceeded in the exact oracle.
    LimitsExceeded(String),
    /// Non-finite value encountered during training.
    NumericalFailure(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyCorpus => write!(f, "corpus is empty"),
            Error::DimMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::TokenOutOfRange { id, vocab } => {
                write!(f, "token id {id} out of range for vocabulary of size {vocab}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::BadRecord { line, msg } => write!(f, "line {line}: {msg}"),
            Error::MissingContext(msg) => write!(f, "missing reward context: {msg}"),
            Error::LimitsExceeded(msg) => write!(f, "enumeration limits exceeded: {msg}"),
            Error::NumericalFailure(msg) => write!(f, "numerical failure: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
