use thiserror::Error;

use crate::nemytsky::NemytskyReport;
use crate::picard::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A nonlinearity or kernel that does not satisfy its structural hypotheses.
    #[error("invalid specification: {0}")]
    SpecInvalid(String),

    /// The kernel failed a condition check required before assembly.
    #[error("specification rejected: {0}")]
    SpecRejected(String),

    #[error("domain violation: value {value} at index {index} outside [0, {upper}]")]
    DomainViolation { index: usize, value: f64, upper: f64 },

    #[error("successive approximations did not converge in {} iterations", .0.iterations)]
    NonConvergence(Box<SolveReport>),

    #[error("Hammerstein-Nemytsky iteration did not converge in {} iterations", .0.iterations)]
    NemytskyNonConvergence(Box<NemytskyReport>),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("inconsistent report: {0}")]
    InconsistentReport(String),

    #[error("hypothesis not met: {0}")]
    HypothesisNotMet(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
