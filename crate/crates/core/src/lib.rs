//! Shooting SQP for constrained trajectory optimization.
//!
//! The solver optimizes over controls only (states are the rollout of the
//! controls) and supports three line-search rollouts:
//!
//! * open loop, the plain shooting SQP step;
//! * closed loop with exact sensitivity gains from a dynamic-programming pass
//!   over one-step QPs, propagating critical regions alongside the cost-to-go;
//! * closed loop with gains from a log-barrier smoothing of the QP, computed
//!   for all steps in parallel.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

pub mod barrier;
pub mod error;
pub mod exact;
pub mod linearize;
pub mod merit;
pub mod models;
pub mod oracle;
pub mod problem;
pub mod qp;
pub mod rollout;
pub mod scalar;
pub mod sqp;

pub use error::{Error, Result};
pub use linearize::HessianMode;
pub use problem::{Dynamics, Objective, StateConstraints};
pub use rollout::GainSource;
pub use scalar::Real;
pub use sqp::{sqp_solve, GammaSchedule, Method, StallReason};

/// `f64` problem definition.
pub type Problem = problem::ProblemSpec<f64>;
/// `f64` primal-dual iterate.
pub type Iterate = problem::Iterate<f64>;
/// `f64` solver options.
pub type SolverOptions = sqp::SolverOptions<f64>;
/// `f64` solve report.
pub type SolveReport = sqp::SolveReport<f64>;
/// `f64` QP sub-problem data.
pub type QpData = linearize::QpData<f64>;
/// `f64` gain schedule.
pub type GainSchedule = rollout::GainSchedule<f64>;
