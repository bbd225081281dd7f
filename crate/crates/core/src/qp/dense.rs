//! Dense KKT operator and active-set polishing.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::ipm::KktSystem;
use super::{kkt_error, QpInstance, QpSolution, QpStatus};
use crate::error::{Error, Result};
use crate::scalar::Real;

enum Factor<T: Real> {
    /// Condensed SPD system when there are no equalities.
    Chol(Cholesky<T, Dyn>),
    Lu(nalgebra::LU<T, Dyn, Dyn>),
}

pub struct DenseKkt<'a, T: Real> {
    inst: &'a QpInstance<T>,
    factor: Option<Factor<T>>,
}

impl<'a, T: Real> DenseKkt<'a, T> {
    pub fn new(inst: &'a QpInstance<T>) -> Self {
        Self { inst, factor: None }
    }
}

/// Cholesky of the symmetric part, shifting the diagonal up when the
/// factorization breaks down.
pub(crate) fn robust_cholesky<T: Real>(m: DMatrix<T>) -> Result<Cholesky<T, Dyn>> {
    let sym = (&m + m.transpose()) * T::lit(0.5);
    if let Some(c) = sym.clone().cholesky() {
        return Ok(c);
    }
    let scale = T::one() + sym.amax();
    let mut delta = scale * T::machine_eps() * T::lit(100.0);
    for _ in 0..8 {
        let shifted = &sym + DMatrix::identity(sym.nrows(), sym.nrows()) * delta;
        if let Some(c) = shifted.cholesky() {
            return Ok(c);
        }
        delta *= T::lit(100.0);
    }
    Err(Error::SingularKkt)
}


/// LU of a saddle-point matrix, retrying with a tiny primal-dual
/// regularization if the exact matrix is numerically singular.
pub(crate) fn factor_saddle<T: Real>(
    top_left: DMatrix<T>,
    constraints: &DMatrix<T>,
) -> Result<nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>> {
    let n = top_left.nrows();
    let p = constraints.nrows();
    let mut k = DMatrix::zeros(n + p, n + p);
    k.view_mut((0, 0), (n, n)).copy_from(&top_left);
    k.view_mut((n, 0), (p, n)).copy_from(constraints);
    k.view_mut((0, n), (n, p)).copy_from(&constraints.transpose());
    let lu = k.clone().lu();
    if lu_ok(&lu) {
        return Ok(lu);
    }
    let scale = T::one() + k.amax();
    let delta = scale * T::machine_eps().sqrt() * T::lit(1e-2);
    for i in 0..n {
        k[(i, i)] += delta;
    }
    for i in n..n + p {
        k[(i, i)] -= delta;
    }
    let lu = k.lu();
    if lu_ok(&lu) {
        Ok(lu)
    } else {
        Err(Error::SingularKkt)
    }
}

fn lu_ok<T: Real>(lu: &nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>) -> bool {
    let u = lu.u();
    let dmax = u.diagonal().amax();
    if !(dmax > T::zero()) || !dmax.is_finite() {
        return u.nrows() == 0;
    }
    u.diagonal().iter().all(|d| d.abs() > dmax * T::machine_eps() * T::lit(1e3))
}

impl<T: Real> KktSystem<T> for DenseKkt<'_, T> {
    fn n_var(&self) -> usize {
        self.inst.g.len()
    }
    fn n_eq(&self) -> usize {
        self.inst.b_eq.len()
    }
    fn n_ineq(&self) -> usize {
        self.inst.h_ineq.len()
    }
    fn linear(&self) -> &DVector<T> {
        &self.inst.g
    }
    fn eq_rhs(&self) -> &DVector<T> {
        &self.inst.b_eq
    }
    fn ineq_rhs(&self) -> &DVector<T> {
        &self.inst.h_ineq
    }
    fn hess_mul(&self, z: &DVector<T>) -> DVector<T> {
        &self.inst.h_mat * z
    }
    fn eq_mul(&self, z: &DVector<T>) -> DVector<T> {
        &self.inst.a_eq * z
    }
    fn eq_tmul(&self, nu: &DVector<T>) -> DVector<T> {
        self.inst.a_eq.tr_mul(nu)
    }
    fn ineq_mul(&self, z: &DVector<T>) -> DVector<T> {
        &self.inst.g_ineq * z
    }
    fn ineq_tmul(&self, lam: &DVector<T>) -> DVector<T> {
        self.inst.g_ineq.tr_mul(lam)
    }

    fn factor(&mut self, w: &DVector<T>) -> Result<()> {
        let g = &self.inst.g_ineq;
        let mut wg = g.clone();
        for (i, mut row) in wg.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let top = &self.inst.h_mat + g.tr_mul(&wg);
        self.factor = Some(if self.inst.a_eq.nrows() == 0 {
            Factor::Chol(robust_cholesky(top)?)
        } else {
            Factor::Lu(factor_saddle(top, &self.inst.a_eq)?)
        });
        Ok(())
    }

    fn solve(&self, rz: &DVector<T>, re: &DVector<T>) -> Result<(DVector<T>, DVector<T>)> {
        let n = rz.len();
        let lu = match self.factor.as_ref().ok_or(Error::SingularKkt)? {
            Factor::Chol(c) => return Ok((c.solve(rz), DVector::zeros(0))),
            Factor::Lu(lu) => lu,
        };
        let mut rhs = DVector::zeros(n + re.len());
        rhs.rows_mut(0, n).copy_from(rz);
        rhs.rows_mut(n, re.len()).copy_from(re);
        let sol = lu.solve(&rhs).ok_or(Error::SingularKkt)?;
        Ok((sol.rows(0, n).into_owned(), sol.rows(n, re.len()).into_owned()))
    }
}

/// Re-solves the equality-constrained KKT system on the active set guessed
/// from the interior point iterate (`λ_i > s_i`). Returns `None` when the
/// guess does not produce a primal-dual feasible point.
pub fn polish<T: Real>(inst: &QpInstance<T>, sol: &QpSolution<T>, s: &DVector<T>) -> Option<QpSolution<T>> {
    let n = inst.n_var();
    let active: Vec<usize> = (0..inst.h_ineq.len()).filter(|&i| sol.lambda_ineq[i] > s[i]).collect();
    let p_eq = inst.a_eq.nrows();
    let mut cons = DMatrix::zeros(p_eq + active.len(), n);
    let mut rhs = DVector::zeros(n + p_eq + active.len());
    cons.view_mut((0, 0), (p_eq, n)).copy_from(&inst.a_eq);
    rhs.rows_mut(0, n).copy_from(&(-&inst.g));
    rhs.rows_mut(n, p_eq).copy_from(&inst.b_eq);
    for (r, &i) in active.iter().enumerate() {
        cons.row_mut(p_eq + r).copy_from(&inst.g_ineq.row(i));
        rhs[n + p_eq + r] = inst.h_ineq[i];
    }
    let lu = factor_saddle(inst.h_mat.clone(), &cons).ok()?;
    let x = lu.solve(&rhs)?;
    let z = x.rows(0, n).into_owned();
    let nu = x.rows(n, p_eq).into_owned();
    let mut lam = DVector::zeros(inst.h_ineq.len());
    for (r, &i) in active.iter().enumerate() {
        lam[i] = x[n + p_eq + r];
    }
    if lam.iter().any(|l| *l < T::zero()) {
        return None;
    }
    let err = kkt_error(inst, &z, &nu, &lam);
    if !err.is_finite() {
        return None;
    }
    Some(QpSolution {
        z,
        lambda_eq: nu,
        lambda_ineq: lam,
        status: QpStatus::Optimal,
        kkt_error: err,
        iterations: sol.iterations,
    })
}
