use thiserror::Error;

/// Errors raised by every layer of the toolkit.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// A table-backed computation needed a vertex (or a certified distance)
    /// beyond the loaded Cayley ball.
    #[error("out of loaded ball: {0}")]
    OutOfLoadedBall(String),

    /// A configured resource cap (ball size, memo size, enumeration size) was hit.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// Malformed table-model, chain, cache or report file.
    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },

    /// An argument outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or incomplete configuration (e.g. d-hat requested before C2 is set).
    #[error("configuration error: {0}")]
    Configuration(String),

    /// The recursion for r did not strictly decrease the distance to the base point.
    #[error("recursion does not decrease distance: {0}")]
    NonDecreasingRecursion(String),

    /// A decay fit produced a rate that is not below one.
    #[error("fit failure: {0}")]
    FitFailure(String),

    /// An always-on runtime assertion (convexity, support, Lipschitz sandwich) failed.
    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
