//! Kinematic car, state `(p_x, p_y, θ, v)`, control `(u^θ, u^v)`.
//!
//! Heading is measured from the `y` axis: `ṗ_x = v sin θ`, `ṗ_y = v cos θ`.

use nalgebra::{DMatrix, DVector};

use crate::problem::Dynamics;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct CarDynamics<T> {
    pub dt: T,
}

impl<T: Real> Default for CarDynamics<T> {
    fn default() -> Self {
        Self { dt: T::lit(0.05) }
    }
}

impl<T: Real> CarDynamics<T> {
    /// Steering and acceleration limits.
    pub fn control_bounds() -> (DVector<T>, DVector<T>) {
        let s = T::pi() / T::lit(3.0);
        let a = T::lit(6.0);
        (DVector::from_vec(vec![-s, -a]), DVector::from_vec(vec![s, a]))
    }
}

impl<T: Real> Dynamics<T> for CarDynamics<T> {
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn dt(&self) -> T {
        self.dt
    }

    fn step(&self, _k: usize, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let (th, v) = (x[2], x[3]);
        let dt = self.dt;
        DVector::from_vec(vec![
            x[0] + dt * v * th.sin(),
            x[1] + dt * v * th.cos(),
            th + dt * v * u[0],
            v + dt * u[1],
        ])
    }

    fn jacobians(&self, _k: usize, x: &DVector<T>, u: &DVector<T>) -> (DMatrix<T>, DMatrix<T>) {
        let (th, v) = (x[2], x[3]);
        let dt = self.dt;
        let (s, c) = th.sin_cos();
        let mut a = DMatrix::identity(4, 4);
        a[(0, 2)] = dt * v * c;
        a[(0, 3)] = dt * s;
        a[(1, 2)] = -dt * v * s;
        a[(1, 3)] = dt * c;
        a[(2, 3)] = dt * u[0];
        let mut b = DMatrix::zeros(4, 2);
        b[(2, 0)] = dt * v;
        b[(3, 1)] = dt;
        (a, b)
    }

    fn weighted_hessian(&self, _k: usize, x: &DVector<T>, _u: &DVector<T>, w: &DVector<T>) -> DMatrix<T> {
        let (th, v) = (x[2], x[3]);
        let dt = self.dt;
        let (s, c) = th.sin_cos();
        // stacked (p_x, p_y, θ, v, u^θ, u^v)
        let mut h = DMatrix::zeros(6, 6);
        h[(2, 2)] = -dt * v * (w[0] * s + w[1] * c);
        let tv = dt * (w[0] * c - w[1] * s);
        h[(2, 3)] = tv;
        h[(3, 2)] = tv;
        h[(3, 4)] = dt * w[2];
        h[(4, 3)] = dt * w[2];
        h
    }

    fn angular_dims(&self) -> &[usize] {
        &[]
    }
}
