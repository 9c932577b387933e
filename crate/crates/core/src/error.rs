use thiserror::Error;

/// Everything that can go wrong in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("grid resolution: {0}")]
    GridResolution(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("filter out of band: {0}")]
    OutOfBand(String),

    #[error("insufficient span: {0}")]
    InsufficientSpan(String),

    #[error("model cannot be normalized: {0}")]
    Normalization(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("mask support: {0}")]
    Support(String),

    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("I/O error")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by rejected input values rather than by numerics or I/O.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Degenerate(_)
                | Error::GridResolution(_)
                | Error::GridMismatch(_)
                | Error::OutOfBand(_)
                | Error::InsufficientSpan(_)
                | Error::Support(_)
                | Error::Parse(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
