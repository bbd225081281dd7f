use thiserror::Error;

/// Errors raised by the trajectory optimization routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rollout produced a non-finite state at step {step}")]
    DivergedRollout { step: usize },

    #[error("non-finite derivative data at step {step}")]
    NonFiniteDerivative { step: usize },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("ill-posed QP instance: {0}")]
    IllPosedQp(String),

    #[error("singular KKT system")]
    SingularKkt,

    #[error("one-step QP infeasible at step {step}")]
    OneStepInfeasible { step: usize },

    #[error("one-step QP did not converge at step {step}")]
    OneStepFailed { step: usize },

    #[error("active constraints are linearly dependent (LICQ fails) at step {step}")]
    LicqViolated { step: usize },

    #[error("barrier solve failed: {0}")]
    Barrier(String),

    #[error("oracle failure: {0}")]
    Oracle(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
