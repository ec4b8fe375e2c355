use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("quadrature failed to reach tolerance on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },

    #[error("fit rejected: {0}")]
    Fit(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("moment diverges: {0}")]
    Diverges(String),

    #[error("generator is not irreducible")]
    NotIrreducible,

    #[error("leading eigenvalue {lambda:e} is not critical")]
    NotCritical { lambda: f64 },

    #[error("step size too large: value {value:e} left the admissible range at t = {t}")]
    StepSize { t: f64, value: f64 },

    #[error("singular start: |V(theta) - V(10 theta)| = {gap:e} at t0 = {t0}")]
    SingularStart { t0: f64, gap: f64 },

    #[error("survival probability {0:e} is negligible")]
    DivisionByNegligible(f64),

    #[error("insufficient replicas: {0}")]
    InsufficientReplicas(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
