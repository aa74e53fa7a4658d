use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (e.g. a label >= c).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration or parameter combination.
    #[error("config error: {0}")]
    Config(String),

    /// Non-finite input or intermediate value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Vector or matrix widths do not agree.
    #[error("shape error: {0}")]
    Shape(String),

    /// Instance exceeds what an exhaustive search can handle.
    #[error("size error: {0}")]
    Size(String),

    /// The operation is not defined for this input kind.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Well-formed input file with invalid content.
    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Process exit code for this error class: 2 for configuration problems,
    /// 3 for I/O and input-data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Parse { .. } | Error::Data(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
