//! Benchmark dynamics, costs and state constraints.

pub mod acrobot;
pub mod car;
pub mod chart;
pub mod constraints;
pub mod costs;
pub mod linear;
pub mod quadpend;

pub use acrobot::{AcrobotDynamics, AcrobotObjective, AcrobotParams};
pub use car::CarDynamics;
pub use constraints::{ConstraintStack, ConstraintTerm, Disc, PointMap, Where};
pub use costs::QuadraticObjective;
pub use linear::LinearDynamics;
pub use quadpend::{QuadPendDynamics, QuadPendObjective, QuadPendParams};

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// Explicit Euler step of a second-order mechanical system with state
/// `(q, v)`, given `q̈` and its partial derivatives.
///
/// Returns `(x⁺, A, B)`.
pub(crate) fn euler_mechanical<T: Real>(
    x: &DVector<T>,
    qdd: &DVector<T>,
    dqdd_dq: &DMatrix<T>,
    dqdd_dv: &DMatrix<T>,
    dqdd_du: &DMatrix<T>,
    dt: T,
) -> (DVector<T>, DMatrix<T>, DMatrix<T>) {
    let d = qdd.len();
    let m = dqdd_du.ncols();
    let mut next = x.clone();
    for i in 0..d {
        next[i] += dt * x[d + i];
        next[d + i] += dt * qdd[i];
    }
    let mut a = DMatrix::identity(2 * d, 2 * d);
    for i in 0..d {
        a[(i, d + i)] += dt;
    }
    a.view_mut((d, 0), (d, d)).add_assign(&(dqdd_dq * dt));
    a.view_mut((d, d), (d, d)).add_assign(&(dqdd_dv * dt));
    let mut b = DMatrix::zeros(2 * d, m);
    b.view_mut((d, 0), (d, m)).copy_from(&(dqdd_du * dt));
    (next, a, b)
}
