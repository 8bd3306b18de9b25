use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("scalar {name} must be unimodular, |{name}| = {modulus}")]
    NotUnimodular { name: &'static str, modulus: f64 },

    #[error("operator is singular; negative powers are undefined")]
    Singular,

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("operator is not hyperbolic (no stable/unstable splitting)")]
    NotHyperbolic,

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("pseudotrajectory defect {defect} exceeds admissible bound {bound}")]
    DefectTooLarge { defect: f64, bound: f64 },

    #[error("degenerate construction: {0}")]
    Degenerate(String),

    #[error("subspace is not invariant: leakage {leakage}")]
    NotInvariant { leakage: f64 },

    #[error("floating-point precision lost at index {index}: {detail}")]
    PrecisionLoss { index: i64, detail: String },

    #[error("serialization: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// Whether the failure is numerical (non-convergence or precision loss)
    /// rather than caused by invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonConvergence { .. } | Error::PrecisionLoss { .. })
    }
}
