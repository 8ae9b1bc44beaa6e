use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or incomplete input data.
    #[error("input error: {0}")]
    Input(String),

    /// A configuration invariant is violated; the first field names the field.
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    /// Numerical failure with a diagnostic message (singular design, zero variance).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// No root could be bracketed when inverting a confidence function.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// The caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A simulation replicate failed; carries the replicate index.
    #[error("replicate {index}: {source}")]
    Replicate {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn validation(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Input(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
