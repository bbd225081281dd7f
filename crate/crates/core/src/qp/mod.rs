//! Convex QP backend.
//!
//! Canonical form: `min ½zᵀHz + gᵀz  s.t.  A z = b,  G z ≤ h`.
//! [`solve_qp`] handles dense instances; [`ocp::OcpQp`] is the stage-wise
//! optimal-control layout solved with a Riccati-factored KKT system. Both
//! share the Mehrotra predictor-corrector loop in [`ipm`].

pub mod dense;
pub mod ipm;
pub mod ocp;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use ocp::{OcpQp, OcpSolution, OcpStage, OcpTerminal};

#[derive(Debug, Clone, PartialEq)]
pub struct QpInstance<T: Real> {
    pub h_mat: DMatrix<T>,
    pub g: DVector<T>,
    pub a_eq: DMatrix<T>,
    pub b_eq: DVector<T>,
    pub g_ineq: DMatrix<T>,
    pub h_ineq: DVector<T>,
}

impl<T: Real> QpInstance<T> {
    /// Unconstrained instance with the given Hessian and gradient.
    pub fn unconstrained(h_mat: DMatrix<T>, g: DVector<T>) -> Self {
        let n = g.len();
        Self {
            h_mat,
            g,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            g_ineq: DMatrix::zeros(0, n),
            h_ineq: DVector::zeros(0),
        }
    }

    pub fn with_inequalities(mut self, g_ineq: DMatrix<T>, h_ineq: DVector<T>) -> Self {
        self.g_ineq = g_ineq;
        self.h_ineq = h_ineq;
        self
    }

    pub fn with_equalities(mut self, a_eq: DMatrix<T>, b_eq: DVector<T>) -> Self {
        self.a_eq = a_eq;
        self.b_eq = b_eq;
        self
    }

    pub fn n_var(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, z: &DVector<T>) -> T {
        T::lit(0.5) * z.dot(&(&self.h_mat * z)) + self.g.dot(z)
    }

    /// Shape and finiteness checks.
    pub fn validate(&self) -> Result<()> {
        let n = self.g.len();
        let ok = self.h_mat.shape() == (n, n)
            && self.a_eq.ncols() == n
            && self.a_eq.nrows() == self.b_eq.len()
            && self.g_ineq.ncols() == n
            && self.g_ineq.nrows() == self.h_ineq.len();
        if !ok {
            return Err(Error::IllPosedQp("inconsistent dimensions".into()));
        }
        let finite = |s: &[T]| s.iter().all(|v| v.is_finite());
        if !(finite(self.h_mat.as_slice())
            && finite(self.g.as_slice())
            && finite(self.a_eq.as_slice())
            && finite(self.b_eq.as_slice())
            && finite(self.g_ineq.as_slice())
            && finite(self.h_ineq.as_slice()))
        {
            return Err(Error::IllPosedQp("non-finite data".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T: Real> {
    pub z: DVector<T>,
    pub lambda_eq: DVector<T>,
    pub lambda_ineq: DVector<T>,
    pub status: QpStatus,
    pub kkt_error: T,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    /// Dense solves only: re-solve the equality system on the guessed active
    /// set and keep it when it is primal-dual feasible.
    pub polish: bool,
    /// Stop on the central path at `s ∘ λ = μ` instead of the optimum.
    pub target_mu: Option<T>,
}

impl<T: Real> Default for QpOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-8), max_iter: 100, polish: true, target_mu: None }
    }
}

impl<T: Real> QpOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Starting point for [`solve_qp`].
#[derive(Debug, Clone)]
pub struct WarmStart<T: Real> {
    pub z: DVector<T>,
    pub lambda_ineq: Option<DVector<T>>,
}

/// Solves a dense QP with the interior-point backend.
pub fn solve_qp<T: Real>(
    inst: &QpInstance<T>,
    opts: &QpOptions<T>,
    warm_start: Option<&WarmStart<T>>,
) -> Result<QpSolution<T>> {
    inst.validate()?;
    if !inst.h_mat.iter().zip(inst.h_mat.transpose().iter()).all(|(a, b)| {
        (*a - *b).abs() <= T::lit(1e-9) * (T::one() + a.abs())
    }) {
        return Err(Error::NotSymmetric);
    }
    let mut sys = dense::DenseKkt::new(inst);
    let res = ipm::mehrotra(&mut sys, opts, warm_start)?;
    let mut sol = QpSolution {
        z: res.z,
        lambda_eq: res.nu,
        lambda_ineq: res.lambda,
        status: res.status,
        kkt_error: res.kkt_error,
        iterations: res.iterations,
    };
    // an interior point that stalls short of a tight tolerance is usually
    // already on the right active set, so polishing can still finish it
    let near = sol.status == QpStatus::MaxIter && sol.kkt_error <= opts.tol.sqrt();
    if opts.polish && opts.target_mu.is_none() && (sol.status == QpStatus::Optimal || near) && inst.h_ineq.len() > 0 {
        if let Some(p) = dense::polish(inst, &sol, &res.s) {
            if p.kkt_error <= sol.kkt_error.max(opts.tol) {
                sol = p;
            }
        }
    }
    Ok(sol)
}

/// Scaled KKT error of a candidate primal-dual point for a dense instance.
pub fn kkt_error<T: Real>(inst: &QpInstance<T>, z: &DVector<T>, nu: &DVector<T>, lam: &DVector<T>) -> T {
    if ![z, nu, lam].iter().all(|v| v.iter().all(|x| x.is_finite())) {
        return T::lit(f64::INFINITY);
    }
    let hz = &inst.h_mat * z;
    let atn = inst.a_eq.transpose() * nu;
    let gtl = inst.g_ineq.transpose() * lam;
    let rd = &hz + &inst.g + &atn + &gtl;
    let d_scale = T::one() + hz.amax().max(inst.g.amax()).max(atn.amax()).max(gtl.amax());
    let az = &inst.a_eq * z;
    let gz = &inst.g_ineq * z;
    let re = (&az - &inst.b_eq).amax();
    let slack = &inst.h_ineq - &gz;
    let ri = slack.iter().fold(T::zero(), |a, s| a.max(-*s));
    let p_scale = T::one() + az.amax().max(inst.b_eq.amax()).max(gz.amax()).max(inst.h_ineq.amax());
    let comp = slack
        .iter()
        .zip(lam.iter())
        .fold(T::zero(), |a, (s, l)| a.max((s.max(T::zero()) * *l).abs()));
    let dual_neg = lam.iter().fold(T::zero(), |a, l| a.max(-*l));
    (rd.amax() / d_scale).max(re.max(ri) / p_scale).max(comp).max(dual_neg)
}

/// Active-set report for a solved QP.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    /// Rows with `h − Gz ≤ tol_act`.
    pub active: Vec<usize>,
    /// Active rows whose dual also exceeds `tol_act`.
    pub strongly_active: Vec<usize>,
    pub licq: bool,
    pub strict_complementarity: bool,
}

/// Classifies inequality rows at a solution and checks LICQ on the active
/// rows (together with any equality rows).
pub fn active_set<T: Real>(sol: &QpSolution<T>, inst: &QpInstance<T>, tol_act: T) -> ActiveSet {
    let slack = &inst.h_ineq - &inst.g_ineq * &sol.z;
    let active: Vec<usize> = (0..slack.len()).filter(|&i| slack[i] <= tol_act).collect();
    let strongly_active: Vec<usize> = active.iter().copied().filter(|&i| sol.lambda_ineq[i] > tol_act).collect();
    let rows: Vec<DVector<T>> = (0..inst.a_eq.nrows())
        .map(|i| inst.a_eq.row(i).transpose())
        .chain(active.iter().map(|&i| inst.g_ineq.row(i).transpose()))
        .collect();
    ActiveSet {
        licq: full_row_rank(&rows, inst.n_var()),
        strict_complementarity: strongly_active.len() == active.len(),
        active,
        strongly_active,
    }
}

/// Rank test via singular values with a relative cutoff.
pub(crate) fn full_row_rank<T: Real>(rows: &[DVector<T>], n: usize) -> bool {
    if rows.is_empty() {
        return true;
    }
    if rows.len() > n {
        return false;
    }
    let m = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let sv = m.singular_values();
    let smax = sv.amax();
    if smax == T::zero() {
        return false;
    }
    let cutoff = smax * T::lit(1e-10);
    sv.iter().all(|s| *s > cutoff)
}
