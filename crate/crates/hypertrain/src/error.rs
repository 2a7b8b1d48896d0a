use thiserror::Error;

/// Errors surfaced by the library.
///
/// `Contract` and `ShapeMismatch` mean the caller violated a documented
/// precondition; `Numeric` means a non-finite value showed up while strict
/// numerics were enabled (or the optimizer blew up). The CLI maps the
/// former group to exit code 1 and `Numeric` to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("gradient oracle invalid: {0}")]
    OracleInvalid(String),

    #[error("{path}:{row}:{col}: {message}")]
    Ingest {
        path: String,
        row: usize,
        col: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors that indicate a numeric blow-up rather than misuse.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
