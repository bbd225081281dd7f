//! Planar quadrotor carrying a point-mass pendulum.
//!
//! State `(p_x, p_z, θ, φ, ṗ_x, ṗ_z, θ̇, φ̇)` with `φ = 0` the pendulum
//! hanging below the body. Controls are the two rotor thrusts.

use nalgebra::{DMatrix, DVector, Matrix4, Matrix4x2, Vector4};

use super::euler_mechanical;
use crate::problem::{Dynamics, Objective};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPendParams<T> {
    pub mq: T,
    pub mp: T,
    /// Half wing-span.
    pub l: T,
    /// Pendulum length.
    pub pole: T,
    pub g: T,
    pub inertia: T,
    /// Viscous friction at the pendulum joint.
    pub nu: T,
}

impl<T: Real> Default for QuadPendParams<T> {
    fn default() -> Self {
        let mq = T::lit(0.486);
        let l = T::lit(0.25);
        Self {
            mq,
            mp: T::lit(0.2) * mq,
            l,
            pole: T::lit(2.0) * l,
            g: T::lit(9.81),
            inertia: T::lit(0.00383),
            nu: T::lit(0.01),
        }
    }
}

impl<T: Real> QuadPendParams<T> {
    /// Per-rotor thrust that balances gravity.
    pub fn hover_thrust(&self) -> T {
        T::lit(0.5) * (self.mq + self.mp) * self.g
    }

    /// Viscous torque on the pendulum for relative rate `φ̇ − θ̇`.
    pub fn friction_torque(&self, relative_rate: T) -> T {
        -self.nu * relative_rate
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadPendDynamics<T> {
    pub params: QuadPendParams<T>,
    pub dt: T,
}

impl<T: Real> Default for QuadPendDynamics<T> {
    fn default() -> Self {
        Self { params: QuadPendParams::default(), dt: T::lit(0.025) }
    }
}

struct Terms<T: Real> {
    qdd: Vector4<T>,
    dqdd_dq: Matrix4<T>,
    dqdd_dv: Matrix4<T>,
    dqdd_du: Matrix4x2<T>,
}

impl<T: Real> QuadPendDynamics<T> {
    pub fn control_bounds(&self) -> (DVector<T>, DVector<T>) {
        let w = self.params.mq * self.params.g;
        (
            DVector::from_element(2, T::lit(0.1) * w),
            DVector::from_element(2, T::lit(3.0) * w),
        )
    }

    pub fn mass_matrix(&self, phi: T) -> Matrix4<T> {
        let p = &self.params;
        let mt = p.mq + p.mp;
        let ml = p.mp * p.pole;
        let (s, c) = phi.sin_cos();
        let z = T::zero();
        Matrix4::new(
            mt, z, z, ml * c, //
            z, mt, z, ml * s, //
            z, z, p.inertia, z, //
            ml * c, ml * s, z, ml * p.pole,
        )
    }

    /// Continuous-time generalized accelerations; `None` if the mass matrix
    /// cannot be factorized.
    pub fn accelerations(&self, x: &DVector<T>, u: &DVector<T>) -> Option<Vector4<T>> {
        self.terms(x, u).map(|t| t.qdd)
    }

    fn terms(&self, x: &DVector<T>, u: &DVector<T>) -> Option<Terms<T>> {
        let p = &self.params;
        let two = T::lit(2.0);
        let z = T::zero();
        let (th, phi) = (x[2], x[3]);
        let (thd, phid) = (x[6], x[7]);
        let (st, ct) = th.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let mt = p.mq + p.mp;
        let ml = p.mp * p.pole;
        let thrust = u[0] + u[1];
        let tau_f = p.friction_torque(phid - thd);

        let rhs = Vector4::new(
            -thrust * st + ml * sp * phid * phid,
            thrust * ct - ml * cp * phid * phid - mt * p.g,
            (u[0] - u[1]) * p.l - tau_f,
            tau_f - ml * p.g * sp,
        );
        let chol = self.mass_matrix(phi).cholesky()?;
        let qdd = chol.solve(&rhs);

        let mut d_rhs_dq = Matrix4::zeros();
        d_rhs_dq[(0, 2)] = -thrust * ct;
        d_rhs_dq[(1, 2)] = -thrust * st;
        d_rhs_dq[(0, 3)] = ml * cp * phid * phid;
        d_rhs_dq[(1, 3)] = ml * sp * phid * phid;
        d_rhs_dq[(3, 3)] = -ml * p.g * cp;
        // −(∂M/∂φ) q̈ enters the φ column
        d_rhs_dq[(0, 3)] += ml * sp * qdd[3];
        d_rhs_dq[(1, 3)] -= ml * cp * qdd[3];
        d_rhs_dq[(3, 3)] -= -ml * sp * qdd[0] + ml * cp * qdd[1];

        let mut d_rhs_dv = Matrix4::zeros();
        d_rhs_dv[(2, 2)] = -p.nu;
        d_rhs_dv[(3, 2)] = p.nu;
        d_rhs_dv[(0, 3)] = two * ml * sp * phid;
        d_rhs_dv[(1, 3)] = -two * ml * cp * phid;
        d_rhs_dv[(2, 3)] = p.nu;
        d_rhs_dv[(3, 3)] = -p.nu;

        let d_rhs_du = Matrix4x2::new(
            -st, -st, //
            ct, ct, //
            p.l, -p.l, //
            z, z,
        );
        Some(Terms {
            qdd,
            dqdd_dq: chol.solve(&d_rhs_dq),
            dqdd_dv: chol.solve(&d_rhs_dv),
            dqdd_du: chol.solve(&d_rhs_du),
        })
    }
}

impl<T: Real> Dynamics<T> for QuadPendDynamics<T> {
    fn state_dim(&self) -> usize {
        8
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn dt(&self) -> T {
        self.dt
    }

    fn step(&self, _k: usize, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let Some(qdd) = self.accelerations(x, u) else {
            return DVector::from_element(8, T::lit(f64::NAN));
        };
        let mut next = x.clone();
        for i in 0..4 {
            next[i] += self.dt * x[4 + i];
            next[4 + i] += self.dt * qdd[i];
        }
        next
    }

    fn jacobians(&self, _k: usize, x: &DVector<T>, u: &DVector<T>) -> (DMatrix<T>, DMatrix<T>) {
        let Some(t) = self.terms(x, u) else {
            return (DMatrix::from_element(8, 8, T::lit(f64::NAN)), DMatrix::from_element(8, 2, T::lit(f64::NAN)));
        };
        let to_dyn = |m: &Matrix4<T>| DMatrix::from_fn(4, 4, |i, j| m[(i, j)]);
        let (_, a, b) = euler_mechanical(
            x,
            &DVector::from_column_slice(t.qdd.as_slice()),
            &to_dyn(&t.dqdd_dq),
            &to_dyn(&t.dqdd_dv),
            &DMatrix::from_fn(4, 2, |i, j| t.dqdd_du[(i, j)]),
            self.dt,
        );
        (a, b)
    }

    fn angular_dims(&self) -> &[usize] {
        &[2, 3]
    }
}

/// Stage cost `½(w1(‖(p_x,p_z,θ) − g‖² + 1 + cos φ) + w2‖u − u_h‖²)` and
/// terminal cost `½ w3 (x − x_g)ᵀ Q_N (x − x_g)`.
#[derive(Debug, Clone)]
pub struct QuadPendObjective<T: Real> {
    pub weights: (T, T, T),
    pub goal: DVector<T>,
    pub q_terminal: DMatrix<T>,
    pub hover: T,
}

impl<T: Real> QuadPendObjective<T> {
    pub fn new(params: &QuadPendParams<T>) -> Self {
        let mut qn = DMatrix::identity(8, 8);
        qn[(0, 0)] = T::lit(10.0);
        qn[(1, 1)] = T::lit(10.0);
        Self {
            weights: (T::lit(0.01), T::lit(0.05), T::lit(5.0)),
            goal: DVector::from_vec(vec![
                T::lit(3.0),
                T::lit(-1.5),
                T::zero(),
                T::pi(),
                T::zero(),
                T::zero(),
                T::zero(),
                T::zero(),
            ]),
            q_terminal: qn,
            hover: params.hover_thrust(),
        }
    }
}

impl<T: Real> Objective<T> for QuadPendObjective<T> {
    fn stage_cost(&self, _k: usize, x: &DVector<T>, u: &DVector<T>) -> T {
        let (w1, w2, _) = self.weights;
        let pos = (0..3).fold(T::zero(), |a, i| a + (x[i] - self.goal[i]).powi(2));
        let du = (u[0] - self.hover).powi(2) + (u[1] - self.hover).powi(2);
        T::lit(0.5) * (w1 * (pos + T::one() + x[3].cos()) + w2 * du)
    }

    fn stage_expansion(&self, _k: usize, x: &DVector<T>, u: &DVector<T>) -> (DVector<T>, DMatrix<T>) {
        let (w1, w2, _) = self.weights;
        let half = T::lit(0.5);
        let mut g = DVector::zeros(10);
        let mut h = DMatrix::zeros(10, 10);
        for i in 0..3 {
            g[i] = w1 * (x[i] - self.goal[i]);
            h[(i, i)] = w1;
        }
        g[3] = -half * w1 * x[3].sin();
        h[(3, 3)] = -half * w1 * x[3].cos();
        for j in 0..2 {
            g[8 + j] = w2 * (u[j] - self.hover);
            h[(8 + j, 8 + j)] = w2;
        }
        (g, h)
    }

    fn terminal_cost(&self, x: &DVector<T>) -> T {
        let dx = x - &self.goal;
        T::lit(0.5) * self.weights.2 * dx.dot(&(&self.q_terminal * &dx))
    }

    fn terminal_expansion(&self, x: &DVector<T>) -> (DVector<T>, DMatrix<T>) {
        let w3 = self.weights.2;
        (&self.q_terminal * (x - &self.goal) * w3, &self.q_terminal * w3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_matrix_coupling_at_hanging_pose() {
        let q = QuadPendDynamics::<f64>::default();
        let m = q.mass_matrix(0.0);
        assert!((m[(0, 3)] - 0.0486).abs() < 1e-15);
        assert!((m[(3, 0)] - 0.0486).abs() < 1e-15);
    }

    #[test]
    fn hover_thrust_balances_gravity_at_rest() {
        let q = QuadPendDynamics::<f64>::default();
        let uh = q.params.hover_thrust();
        let acc = q.accelerations(&DVector::zeros(8), &DVector::from_element(2, uh)).unwrap();
        assert!(acc.amax() <= 1e-10, "{acc}");
    }

    #[test]
    fn hover_drift_is_negligible_per_step() {
        let q = QuadPendDynamics::<f64>::default();
        let u = DVector::from_element(2, q.params.hover_thrust());
        let mut x = DVector::zeros(8);
        for k in 0..10 {
            let next = q.step(k, &x, &u);
            assert!((next[1] - x[1]).abs() < 1e-6);
            x = next;
        }
    }

    #[test]
    fn unit_relative_rate_gives_friction_of_minus_nu() {
        let p = QuadPendParams::<f64>::default();
        assert!((p.friction_torque(1.0) + 0.01).abs() < 1e-15);
    }

    #[test]
    fn accelerations_satisfy_lagrangian_residual() {
        // Independent check: M q̈ + Ṁq̇ − ∂T/∂q + ∂V/∂q = F at a random state.
        let q = QuadPendDynamics::<f64>::default();
        let p = q.params;
        let x = DVector::from_vec(vec![0.2, -0.3, 0.4, 1.1, 0.5, -0.7, 0.9, -1.3]);
        let u = DVector::from_vec(vec![2.0, 3.1]);
        let qdd = q.accelerations(&x, &u).unwrap();
        let v = Vector4::new(x[4], x[5], x[6], x[7]);
        let h = 1e-6;
        let dm = (q.mass_matrix(x[3] + h) - q.mass_matrix(x[3] - h)) / (2.0 * h);
        let mdot_v = dm * v * x[7];
        let dt_dphi = 0.5 * v.dot(&(dm * v));
        let dv = Vector4::new(0.0, (p.mq + p.mp) * p.g, 0.0, p.mp * p.g * p.pole * x[3].sin());
        let tau_f = -p.nu * (x[7] - x[6]);
        let f = Vector4::new(
            -(u[0] + u[1]) * x[2].sin(),
            (u[0] + u[1]) * x[2].cos(),
            (u[0] - u[1]) * p.l - tau_f,
            tau_f,
        );
        let mut res = q.mass_matrix(x[3]) * qdd + mdot_v + dv - f;
        res[3] -= dt_dphi;
        assert!(res.amax() < 1e-8, "{res}");
    }
}
