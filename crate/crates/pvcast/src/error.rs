//! Crate-wide error type.

use std::fmt;
use std::path::PathBuf;

/// Result alias used by every fallible routine in the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong, from file handling to numeric misuse.
#[derive(Debug)]
pub enum Error {
    /// File system failure, with the path that triggered it.
    Io { path: PathBuf, source: std::io::Error },
    /// A data or checkpoint file failed to parse.
    Parse { path: PathBuf, line: usize, msg: String },
    /// An argument or configuration value is out of range or malformed.
    Parameter(String),
    /// Two collections that must agree in length do not.
    Shape { what: &'static str, expected: usize, got: usize },
    /// An operation received no data where at least one element is required.
    Empty(&'static str),
    /// A series is constant where variation is required.
    ZeroVariance(&'static str),
    /// A computation produced NaN or infinity.
    NonFinite(&'static str),
    /// Not enough records, days or errors to run the operation.
    InsufficientData { what: &'static str, need: usize, have: usize },
    /// A stateful component was driven outside its protocol.
    State(String),
    /// A quantity whose definition divides by zero for this input.
    Undefined(&'static str),
}

impl Error {
    /// Wraps an I/O failure together with the offending path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Builds a parse error for `line` (1-based) of `path`.
    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, msg: msg.into() }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "{}: {}", path.display(), source),
            Error::Parse { path, line, msg } => {
                write!(f, "{}:{}: {}", path.display(), line, msg)
            }
            Error::Parameter(msg) => write!(f, "invalid parameter: {}", msg),
            Error::Shape { what, expected, got } => {
                write!(f, "{}: expected length {}, got {}", what, expected, got)
            }
            Error::Empty(what) => write!(f, "{} must not be empty", what),
            Error::ZeroVariance(what) => write!(f, "{} has zero variance", what),
            Error::NonFinite(what) => write!(f, "{} is not finite", what),
            Error::InsufficientData { what, need, have } => {
                write!(f, "{}: need at least {}, have {}", what, need, have)
            }
            Error::State(msg) => write!(f, "invalid state: {}", msg),
            Error::Undefined(what) => write!(f, "{} is undefined for this input", what),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
