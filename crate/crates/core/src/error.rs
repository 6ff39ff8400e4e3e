use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input lies outside the domain of a chart or formula.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: String,
    },

    /// The integrator produced a non-finite state.
    #[error("integration failed on path {path} at step {step}: non-finite state")]
    Integration { path: u64, step: usize },

    /// Coefficient matching hit a vanishing leading factor.
    #[error("degenerate recursion for n = {n}: leading factor vanishes at index {index}")]
    Degenerate { n: usize, index: usize },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, constraint: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            value,
            constraint: constraint.into(),
        }
    }
}
