//! Error types shared by all modules.

use thiserror::Error;

/// Errors raised by evaluations, seeds, integration, classification and shooting.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum G2Error {
    /// The state is off the locus where the requested quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Metric coefficients fail positive-definiteness.
    #[error("positivity error: {0}")]
    Positivity(String),
    /// Family parameters violate their defining constraint.
    #[error("constraint error: {0}")]
    Constraint(String),
    /// A retained multi-index is resonant and no repair rule applies.
    #[error("resonance at multi-index {index:?}: {detail}")]
    Resonance { index: Vec<u32>, detail: String },
    /// The right-hand side is not analytic at the base point.
    #[error("non-analytic right-hand side: {0}")]
    NonAnalytic(String),
    /// The seed is not admissible for integration.
    #[error("inadmissible seed: {0}")]
    Seed(String),
    /// Step size underflow before any stop event.
    #[error("step size underflow at parameter {param}: {detail}")]
    Stiffness { param: f64, detail: String },
    /// Two estimators failed to agree within tolerance.
    #[error("convergence error: {0}")]
    Convergence(String),
    /// A trajectory does not close smoothly on the singular orbit.
    #[error("closure error: {0}")]
    Closure(String),
    /// No sign change of the shooting predicate on the scan grid.
    #[error("bracket error: {detail}")]
    Bracket { detail: String, scan: Vec<(f64, String)> },
    /// A backward run left the region it is required to stay in.
    #[error("region exit: {0}")]
    RegionExit(String),
    /// Invalid configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Input/output failure.
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, G2Error>;

impl From<std::io::Error> for G2Error {
    fn from(e: std::io::Error) -> Self {
        G2Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for G2Error {
    fn from(e: serde_json::Error) -> Self {
        G2Error::Io(e.to_string())
    }
}
