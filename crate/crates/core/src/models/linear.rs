//! Time-varying linear dynamics `x_{k+1} = A_k x_k + B_k u_k`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::Dynamics;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct LinearDynamics<T: Real> {
    a: Vec<DMatrix<T>>,
    b: Vec<DMatrix<T>>,
    dt: T,
}

impl<T: Real> LinearDynamics<T> {
    /// One `(A_k, B_k)` pair per step; a single pair is reused for every step.
    pub fn new(a: Vec<DMatrix<T>>, b: Vec<DMatrix<T>>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::Dimension("need matching non-empty A and B sequences".into()));
        }
        let n = a[0].nrows();
        let m = b[0].ncols();
        for (ak, bk) in a.iter().zip(&b) {
            if ak.shape() != (n, n) || bk.shape() != (n, m) {
                return Err(Error::Dimension("inconsistent A/B shapes".into()));
            }
        }
        Ok(Self { a, b, dt: T::one() })
    }

    pub fn time_invariant(a: DMatrix<T>, b: DMatrix<T>) -> Result<Self> {
        Self::new(vec![a], vec![b])
    }

    pub fn a(&self, k: usize) -> &DMatrix<T> {
        &self.a[k.min(self.a.len() - 1)]
    }

    pub fn b(&self, k: usize) -> &DMatrix<T> {
        &self.b[k.min(self.b.len() - 1)]
    }
}

impl<T: Real> Dynamics<T> for LinearDynamics<T> {
    fn state_dim(&self) -> usize {
        self.a[0].nrows()
    }
    fn control_dim(&self) -> usize {
        self.b[0].ncols()
    }
    fn dt(&self) -> T {
        self.dt
    }
    fn step(&self, k: usize, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        self.a(k) * x + self.b(k) * u
    }
    fn jacobians(&self, k: usize, _x: &DVector<T>, _u: &DVector<T>) -> (DMatrix<T>, DMatrix<T>) {
        (self.a(k).clone(), self.b(k).clone())
    }
    fn weighted_hessian(&self, _k: usize, _x: &DVector<T>, _u: &DVector<T>, _w: &DVector<T>) -> DMatrix<T> {
        let d = self.state_dim() + self.control_dim();
        DMatrix::zeros(d, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_zero_state_is_fixed_point() {
        let dyns = LinearDynamics::time_invariant(DMatrix::<f64>::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let x = dyns.step(3, &DVector::zeros(2), &DVector::zeros(2));
        assert_eq!(x, DVector::zeros(2));
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let bad = LinearDynamics::new(
            vec![DMatrix::<f64>::identity(2, 2)],
            vec![DMatrix::zeros(3, 1)],
        );
        assert!(bad.is_err());
    }
}
