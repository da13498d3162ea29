use thiserror::Error;

/// Errors produced by the numerical routines and the data model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("requested accuracy cannot be certified: {0}")]
    Accuracy(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("invalid system: {0}")]
    InvalidSpec(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("bound vacuous for entire eta range [{lo}, {hi}]")]
    VacuousRange { lo: f64, hi: f64 },

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
