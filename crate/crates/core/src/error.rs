use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure in {context}")]
    Numerical { context: String },

    #[error("component {component} is degenerate: {reason}")]
    DegenerateComponent { component: usize, reason: String },

    #[error("invalid covariance code {0:?} (expected three letters from C/U)")]
    InvalidCode(String),

    #[error("all {} starts failed: {}", diagnostics.len(), diagnostics.join("; "))]
    FitFailed { diagnostics: Vec<String> },

    #[error("every grid cell failed ({0} cells)")]
    SearchFailed(usize),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn numerical(context: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
        }
    }

    /// Input-side errors, as opposed to failures of the computation itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::DimensionMismatch(_)
                | Error::InvalidCode(_)
                | Error::Parse { .. }
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
