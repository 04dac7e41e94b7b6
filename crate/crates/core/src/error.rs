use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series denominator within {modulus:e} of a pole (term {term})")]
    PoleProximity { term: usize, modulus: f64 },

    #[error("series did not reach tolerance within {max_terms} terms")]
    Divergence { max_terms: usize },

    #[error("|1 + beta_j| collapsed below threshold at step {step}")]
    DenominatorCollapse { step: usize },

    #[error("no escape-direction change across the initial bracket [{lo:e}, {hi:e}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("iteration did not converge after {iterations} iterations: {what}")]
    NonConvergence { iterations: usize, what: &'static str },

    #[error("shifted trajectory vanished at step {step}")]
    ZeroTrajectory { step: usize },

    #[error("contour quadrature stalled: estimate {estimate:e} after {refinements} refinements")]
    QuadratureStall { refinements: usize, estimate: f64 },

    #[error("site needs more than {max_depth} digit positions")]
    DepthOverflow { max_depth: usize },

    #[error("effective sample size {ess:.2} below 10")]
    DegenerateWeights { ess: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
