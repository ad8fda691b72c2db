use std::fmt;

/// Failure modes shared by every module.
///
/// `Undefined` is the excluded-value marker: the metric has no value for
/// this input (zero denominator, empty set) and aggregation decides what to
/// do with it. Everything else is a caller error.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("incompatible configuration: {0}")]
    Incompatible(String),
    #[error("missing fingerprint items: {}", .0.join(", "))]
    MissingItems(Vec<String>),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("computation failed: {0}")]
    Computation(String),
    /// A session was asked to take an answer it is not currently asking for.
    #[error("not on the current frontier: {0}")]
    OutOfFrontier(String),
}

impl Error {
    pub fn invalid(msg: impl fmt::Display) -> Self {
        Error::Invalid(msg.to_string())
    }

    pub fn undefined(msg: impl fmt::Display) -> Self {
        Error::Undefined(msg.to_string())
    }

    /// True when the error is a NaN-style exclusion rather than bad input.
    pub fn is_undefined(&self) -> bool {
        matches!(self, Error::Undefined(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
