use thiserror::Error;

/// Failure modes shared by all numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("numeric fault in {context}: non-finite value encountered")]
    NumericFault { context: String },

    #[error("invalid parameter `{name}`: must satisfy {constraint} (got {value})")]
    Parameter {
        name: String,
        constraint: String,
        value: String,
    },

    #[error("field has nonzero mean {mean:e} (tolerance {tol:e}); periodic antiderivative undefined")]
    NonZeroMean { mean: f64, tol: f64 },

    #[error("vacuum: min density {min_rho:e} at x = {x:.6} (t = {t:.6})")]
    Vacuum { min_rho: f64, x: f64, t: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("insufficient records: need {needed}, have {have}")]
    InsufficientRecords { needed: usize, have: usize },
}

impl Error {
    pub(crate) fn param(name: &str, constraint: &str, value: impl std::fmt::Display) -> Self {
        Error::Parameter {
            name: name.to_string(),
            constraint: constraint.to_string(),
            value: value.to_string(),
        }
    }

    pub(crate) fn fault(context: &str) -> Self {
        Error::NumericFault {
            context: context.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
