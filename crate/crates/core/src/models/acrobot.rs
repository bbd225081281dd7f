//! Acrobot: two-link arm actuated at the elbow, state `(q1, q2, v1, v2)`.
//!
//! `q = 0` hangs straight down; `q2` is measured relative to the first link.
//! Equations follow the usual manipulator form `M(q)q̈ + C(q,q̇)q̇ = τ_g(q) + Bu`.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use super::chart::angular_residual;
use super::euler_mechanical;
use crate::problem::{Dynamics, Objective};
use crate::scalar::Real;

/// Link parameters. Inertias are about the joint axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcrobotParams<T> {
    pub m1: T,
    pub m2: T,
    pub l1: T,
    pub lc1: T,
    pub lc2: T,
    pub i1: T,
    pub i2: T,
    pub g: T,
}

impl<T: Real> Default for AcrobotParams<T> {
    /// Unit-mass, unit-length links with centres of mass at mid-link.
    fn default() -> Self {
        let third = T::lit(1.0 / 3.0);
        Self {
            m1: T::one(),
            m2: T::one(),
            l1: T::one(),
            lc1: T::lit(0.5),
            lc2: T::lit(0.5),
            i1: third,
            i2: third,
            g: T::lit(9.81),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AcrobotDynamics<T> {
    pub params: AcrobotParams<T>,
    pub dt: T,
}

impl<T: Real> Default for AcrobotDynamics<T> {
    fn default() -> Self {
        Self { params: AcrobotParams::default(), dt: T::lit(0.05) }
    }
}

struct Terms<T: Real> {
    qdd: Vector2<T>,
    dqdd_dq: Matrix2<T>,
    dqdd_dv: Matrix2<T>,
    dqdd_du: Vector2<T>,
}

impl<T: Real> AcrobotDynamics<T> {
    pub fn control_bounds() -> (DVector<T>, DVector<T>) {
        (DVector::from_element(1, T::lit(-2.0)), DVector::from_element(1, T::lit(2.0)))
    }

    pub fn mass_matrix(&self, q2: T) -> Matrix2<T> {
        let p = &self.params;
        let b = p.m2 * p.l1 * p.lc2;
        let c2 = q2.cos();
        let m11 = p.i1 + p.i2 + p.m2 * p.l1 * p.l1 + T::lit(2.0) * b * c2;
        let m12 = p.i2 + b * c2;
        Matrix2::new(m11, m12, m12, p.i2)
    }

    /// Total mechanical energy.
    pub fn energy(&self, x: &DVector<T>) -> T {
        let p = &self.params;
        let v = Vector2::new(x[2], x[3]);
        let kinetic = T::lit(0.5) * v.dot(&(self.mass_matrix(x[1]) * v));
        let potential = -p.m1 * p.g * p.lc1 * x[0].cos()
            - p.m2 * p.g * (p.l1 * x[0].cos() + p.lc2 * (x[0] + x[1]).cos());
        kinetic + potential
    }

    /// Continuous-time joint accelerations.
    pub fn accelerations(&self, x: &DVector<T>, u: T) -> Vector2<T> {
        self.terms(x, u).qdd
    }

    fn terms(&self, x: &DVector<T>, u: T) -> Terms<T> {
        let p = &self.params;
        let two = T::lit(2.0);
        let (q1, q2, v1, v2) = (x[0], x[1], x[2], x[3]);
        let (s1, c1) = q1.sin_cos();
        let (s2, c2) = q2.sin_cos();
        let (s12, c12) = (q1 + q2).sin_cos();
        let b = p.m2 * p.l1 * p.lc2;
        let gm1 = p.m1 * p.g * p.lc1;
        let gm2 = p.m2 * p.g;

        let f = Vector2::new(
            -gm1 * s1 - gm2 * (p.l1 * s1 + p.lc2 * s12) + two * b * s2 * v1 * v2 + b * s2 * v2 * v2,
            -gm2 * p.lc2 * s12 + u - b * s2 * v1 * v1,
        );
        let df_dq = Matrix2::new(
            -gm1 * c1 - gm2 * (p.l1 * c1 + p.lc2 * c12),
            -gm2 * p.lc2 * c12 + two * b * c2 * v1 * v2 + b * c2 * v2 * v2,
            -gm2 * p.lc2 * c12,
            -gm2 * p.lc2 * c12 - b * c2 * v1 * v1,
        );
        let df_dv = Matrix2::new(
            two * b * s2 * v2,
            two * b * s2 * (v1 + v2),
            -two * b * s2 * v1,
            T::zero(),
        );

        let m = self.mass_matrix(q2);
        let m_inv = m.try_inverse().expect("acrobot mass matrix is positive definite");
        let qdd = m_inv * f;
        // ∂M/∂q2 applied to q̈ fills the second column of the correction
        let dm_qdd = Vector2::new(-two * b * s2 * qdd[0] - b * s2 * qdd[1], -b * s2 * qdd[0]);
        let mut rhs_q = df_dq;
        rhs_q[(0, 1)] -= dm_qdd[0];
        rhs_q[(1, 1)] -= dm_qdd[1];
        Terms {
            qdd,
            dqdd_dq: m_inv * rhs_q,
            dqdd_dv: m_inv * df_dv,
            dqdd_du: m_inv * Vector2::new(T::zero(), T::one()),
        }
    }

    fn split(&self, x: &DVector<T>, u: &DVector<T>) -> (DVector<T>, DMatrix<T>, DMatrix<T>) {
        let t = self.terms(x, u[0]);
        let dyn_mat = |m: &Matrix2<T>| DMatrix::from_fn(2, 2, |i, j| m[(i, j)]);
        euler_mechanical(
            x,
            &DVector::from_column_slice(t.qdd.as_slice()),
            &dyn_mat(&t.dqdd_dq),
            &dyn_mat(&t.dqdd_dv),
            &DMatrix::from_column_slice(2, 1, t.dqdd_du.as_slice()),
            self.dt,
        )
    }
}

impl<T: Real> Dynamics<T> for AcrobotDynamics<T> {
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn dt(&self) -> T {
        self.dt
    }
    fn step(&self, _k: usize, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let qdd = self.terms(x, u[0]).qdd;
        let dt = self.dt;
        DVector::from_vec(vec![
            x[0] + dt * x[2],
            x[1] + dt * x[3],
            x[2] + dt * qdd[0],
            x[3] + dt * qdd[1],
        ])
    }
    fn jacobians(&self, _k: usize, x: &DVector<T>, u: &DVector<T>) -> (DMatrix<T>, DMatrix<T>) {
        let (_, a, b) = self.split(x, u);
        (a, b)
    }
    fn angular_dims(&self) -> &[usize] {
        &[0, 1]
    }
}

/// Swing-up cost: `½[w1(cos q1 + cos(q1+q2) + 2) + w2 u²]` per stage and
/// `½ w3 ‖x − x_g‖²` at the end, with both joint angles compared on the
/// circle.
#[derive(Debug, Clone)]
pub struct AcrobotObjective<T: Real> {
    pub weights: (T, T, T),
    pub goal: DVector<T>,
}

impl<T: Real> Default for AcrobotObjective<T> {
    fn default() -> Self {
        Self {
            weights: (T::lit(0.1), T::lit(0.01), T::lit(10.0)),
            goal: DVector::from_vec(vec![T::pi(), T::zero(), T::zero(), T::zero()]),
        }
    }
}

impl<T: Real> Objective<T> for AcrobotObjective<T> {
    fn stage_cost(&self, _k: usize, x: &DVector<T>, u: &DVector<T>) -> T {
        let (w1, w2, _) = self.weights;
        let two = T::lit(2.0);
        T::lit(0.5) * (w1 * (x[0].cos() + (x[0] + x[1]).cos() + two) + w2 * u[0] * u[0])
    }

    fn stage_expansion(&self, _k: usize, x: &DVector<T>, u: &DVector<T>) -> (DVector<T>, DMatrix<T>) {
        let (w1, w2, _) = self.weights;
        let half = T::lit(0.5);
        let (s1, c1) = x[0].sin_cos();
        let (s12, c12) = (x[0] + x[1]).sin_cos();
        let mut g = DVector::zeros(5);
        g[0] = -half * w1 * (s1 + s12);
        g[1] = -half * w1 * s12;
        g[4] = w2 * u[0];
        let mut h = DMatrix::zeros(5, 5);
        h[(0, 0)] = -half * w1 * (c1 + c12);
        h[(0, 1)] = -half * w1 * c12;
        h[(1, 0)] = h[(0, 1)];
        h[(1, 1)] = -half * w1 * c12;
        h[(4, 4)] = w2;
        (g, h)
    }

    fn terminal_cost(&self, x: &DVector<T>) -> T {
        T::lit(0.5) * self.weights.2 * angular_residual(x, &self.goal, &[0, 1]).norm_squared()
    }

    fn terminal_expansion(&self, x: &DVector<T>) -> (DVector<T>, DMatrix<T>) {
        let w3 = self.weights.2;
        (angular_residual(x, &self.goal, &[0, 1]) * w3, DMatrix::identity(4, 4) * w3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn hanging_rest_is_equilibrium() {
        let a = AcrobotDynamics::<f64>::default();
        let x = DVector::zeros(4);
        assert_eq!(a.step(0, &x, &DVector::zeros(1)), x);
    }

    #[test]
    fn inverted_rest_is_equilibrium() {
        let a = AcrobotDynamics::<f64>::default();
        let x = DVector::from_vec(vec![PI, 0.0, 0.0, 0.0]);
        let next = a.step(0, &x, &DVector::zeros(1));
        assert!((next - x).amax() < 1e-12);
    }

    #[test]
    fn unforced_motion_conserves_energy_in_continuous_time() {
        // dE/dt = ∇_q E · q̇ + ∇_v E · q̈ must vanish for u = 0
        let a = AcrobotDynamics::<f64>::default();
        let x = DVector::from_vec(vec![0.7, -1.2, 0.9, 2.1]);
        let qdd = a.accelerations(&x, 0.0);
        let h = 1e-6;
        let mut de = 0.0;
        let rates = [x[2], x[3], qdd[0], qdd[1]];
        for i in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            de += (a.energy(&xp) - a.energy(&xm)) / (2.0 * h) * rates[i];
        }
        assert!(de.abs() < 1e-7, "dE/dt = {de}");
    }

    #[test]
    fn euler_energy_drift_is_second_order_in_dt() {
        let x = DVector::from_vec(vec![0.3, 0.4, -0.5, 0.8]);
        let drift = |dt: f64| {
            let a = AcrobotDynamics { params: AcrobotParams::default(), dt };
            (a.energy(&a.step(0, &x, &DVector::zeros(1))) - a.energy(&x)).abs()
        };
        let ratio = drift(1e-3) / drift(5e-4);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }
}
