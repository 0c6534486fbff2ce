use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("singular matrix (condition number {condition:.3e})")]
    SingularMatrix { condition: f64 },
    #[error("point outside the open support of the shape (radius {radius})")]
    OutsideSupport { radius: f64 },
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),
    #[error("line search failed at iteration {iteration}: {reason}")]
    LineSearchFailure { iteration: usize, reason: String },
    #[error("degenerate estimate: {0}")]
    DegenerateEstimate(String),
}

impl Error {
    /// Stable variant name, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::SingularMatrix { .. } => "SingularMatrix",
            Error::OutsideSupport { .. } => "OutsideSupport",
            Error::UnsupportedShape(_) => "UnsupportedShape",
            Error::LineSearchFailure { .. } => "LineSearchFailure",
            Error::DegenerateEstimate(_) => "DegenerateEstimate",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
