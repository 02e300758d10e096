use thiserror::Error;

/// Errors reported by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter fails its validity constraint (sign, pairing, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// No stationary equilibrium exists for these parameters.
    #[error("inadmissible parameters: {0}")]
    InadmissibleParams(String),

    /// A bracketing root search found no sign change.
    #[error("no bracket: {0}")]
    NoBracket(String),

    /// A margin function required to be decreasing is not.
    #[error("margin not monotone decreasing: {0}")]
    NotMonotone(String),

    /// The backward implicit step broke down (negative discriminant or
    /// nonpositive drift).
    #[error("scheme failure: {0}")]
    SchemeFailure(String),

    /// A computed value function is not strictly decreasing where required.
    #[error("monotonicity violation: {0}")]
    MonotonicityViolation(String),

    /// The upwind stencil demanded a point outside the solve rectangle.
    #[error("boundary outflow: {0}")]
    BoundaryOutflow(String),

    /// Damped Newton failed to reduce the residual.
    #[error("Newton diverged after {iterations} iterations (scaled residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    /// A simulated trajectory left the interpolation domain.
    #[error("step out of domain: {0}")]
    StepOutOfDomain(String),

    /// No admissible subsidy reaches the requested target capacity.
    #[error("target unreachable: {0}")]
    TargetUnreachable(String),

    /// Writing a CSV or report failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
