use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::Objective;
use crate::scalar::Real;

/// Tracking cost `½‖x − x_r‖²_{Q_k} + ½‖u − u_r‖²_{R_k}` with terminal term
/// `½‖x − x_g‖²_{Q_N}`.
///
/// A single `Q`/`R` is reused for every step.
#[derive(Debug, Clone)]
pub struct QuadraticObjective<T: Real> {
    q: Vec<DMatrix<T>>,
    r: Vec<DMatrix<T>>,
    x_ref: DVector<T>,
    u_ref: DVector<T>,
    q_terminal: DMatrix<T>,
    x_goal: DVector<T>,
}

impl<T: Real> QuadraticObjective<T> {
    pub fn new(
        q: Vec<DMatrix<T>>,
        r: Vec<DMatrix<T>>,
        x_ref: DVector<T>,
        u_ref: DVector<T>,
        q_terminal: DMatrix<T>,
        x_goal: DVector<T>,
    ) -> Result<Self> {
        let n = x_ref.len();
        let m = u_ref.len();
        if q.is_empty() || r.is_empty() {
            return Err(Error::Dimension("need at least one Q and R".into()));
        }
        if q.iter().any(|q| q.shape() != (n, n))
            || r.iter().any(|r| r.shape() != (m, m))
            || q_terminal.shape() != (n, n)
            || x_goal.len() != n
        {
            return Err(Error::Dimension("quadratic cost weights have inconsistent shapes".into()));
        }
        Ok(Self { q, r, x_ref, u_ref, q_terminal, x_goal })
    }

    /// Pure control effort `½uᵀRu` plus terminal goal tracking.
    pub fn effort_and_goal(r: DMatrix<T>, q_terminal: DMatrix<T>, x_goal: DVector<T>) -> Result<Self> {
        let n = x_goal.len();
        let m = r.nrows();
        Self::new(
            vec![DMatrix::zeros(n, n)],
            vec![r],
            DVector::zeros(n),
            DVector::zeros(m),
            q_terminal,
            x_goal,
        )
    }

    fn q(&self, k: usize) -> &DMatrix<T> {
        &self.q[k.min(self.q.len() - 1)]
    }
    fn r(&self, k: usize) -> &DMatrix<T> {
        &self.r[k.min(self.r.len() - 1)]
    }
}

impl<T: Real> Objective<T> for QuadraticObjective<T> {
    fn stage_cost(&self, k: usize, x: &DVector<T>, u: &DVector<T>) -> T {
        let dx = x - &self.x_ref;
        let du = u - &self.u_ref;
        let half = T::lit(0.5);
        half * (dx.dot(&(self.q(k) * &dx)) + du.dot(&(self.r(k) * &du)))
    }

    fn stage_expansion(&self, k: usize, x: &DVector<T>, u: &DVector<T>) -> (DVector<T>, DMatrix<T>) {
        let n = x.len();
        let m = u.len();
        let mut g = DVector::zeros(n + m);
        g.rows_mut(0, n).copy_from(&(self.q(k) * (x - &self.x_ref)));
        g.rows_mut(n, m).copy_from(&(self.r(k) * (u - &self.u_ref)));
        let mut h = DMatrix::zeros(n + m, n + m);
        h.view_mut((0, 0), (n, n)).copy_from(self.q(k));
        h.view_mut((n, n), (m, m)).copy_from(self.r(k));
        (g, h)
    }

    fn terminal_cost(&self, x: &DVector<T>) -> T {
        let dx = x - &self.x_goal;
        T::lit(0.5) * dx.dot(&(&self.q_terminal * &dx))
    }

    fn terminal_expansion(&self, x: &DVector<T>) -> (DVector<T>, DMatrix<T>) {
        (&self.q_terminal * (x - &self.x_goal), self.q_terminal.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_zero_cost() {
        let obj = QuadraticObjective::<f64>::effort_and_goal(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(3, 3),
            DVector::zeros(3),
        )
        .unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let u = DVector::from_vec(vec![-1.0, 4.0]);
        assert_eq!(obj.stage_cost(0, &x, &u), 0.0);
        assert_eq!(obj.terminal_cost(&x), 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = DMatrix::from_row_slice(1, 1, &[0.3]);
        let obj = QuadraticObjective::new(
            vec![q.clone()],
            vec![r],
            DVector::from_vec(vec![0.1, -0.2]),
            DVector::from_vec(vec![0.5]),
            q,
            DVector::zeros(2),
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.7, 0.3]);
        let u = DVector::from_vec(vec![-0.4]);
        let (g, _) = obj.stage_expansion(0, &x, &u);
        let h = 1e-6f64;
        for i in 0..3 {
            let (mut xp, mut up, mut xm, mut um) = (x.clone(), u.clone(), x.clone(), u.clone());
            if i < 2 {
                xp[i] += h;
                xm[i] -= h;
            } else {
                up[0] += h;
                um[0] -= h;
            }
            let fd = (obj.stage_cost(0, &xp, &up) - obj.stage_cost(0, &xm, &um)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
