use thiserror::Error;

/// Errors raised by the modelling, estimation and diagnostic routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A price bar or observation failed validation.
    #[error("rejected input at index {index}: {reason}")]
    RejectedInput { index: usize, reason: String },

    /// A structural invariant of the input was violated (e.g. high < low).
    #[error("invariant violated at index {index}: {reason}")]
    Invariant { index: usize, reason: String },

    /// Bad call arguments (window lengths, sequence lengths, orders).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Parameters or data outside the domain of the model or density.
    #[error("domain error: {0}")]
    Domain(String),

    /// Non-finite values encountered.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A simulated path diverged past the overflow guard.
    #[error("simulated path overflowed at step {step} (value {value:e})")]
    PathOverflow { step: usize, value: f64 },

    /// A test statistic is undefined for the supplied data.
    #[error("degenerate test: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
