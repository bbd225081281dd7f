//! Exact sensitivity gains from a backward dynamic-programming pass.
//!
//! Each step solves the one-step QP
//!
//! ```text
//! min_δu  l̃_k(δx, δu) + δṼ_{k+1}(A δx + B δu)
//! s.t.    c^u + J^u δu ≥ 0,   G^cr_{k+1}(A δx + B δu) ≤ h^cr_{k+1}
//! ```
//!
//! at the nominal `δx_k*`, differentiates its KKT system on the strongly
//! active set, and propagates the quadratic cost-to-go and the polyhedral
//! region on which the resulting affine policy is valid.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linearize::QpData;
use crate::qp::dense::factor_saddle;
use crate::qp::{active_set, full_row_rank, solve_qp, QpInstance, QpOptions, QpStatus};
use crate::scalar::Real;

/// `δṼ(δx) = ½δxᵀPδx + pᵀδx + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostToGo<T: Real> {
    pub p_mat: DMatrix<T>,
    pub p_vec: DVector<T>,
    pub v: T,
}

impl<T: Real> CostToGo<T> {
    pub fn value(&self, dx: &DVector<T>) -> T {
        T::lit(0.5) * dx.dot(&(&self.p_mat * dx)) + self.p_vec.dot(dx) + self.v
    }
}

/// `{δx : G δx ≤ h}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalRegion<T: Real> {
    pub g: DMatrix<T>,
    pub h: DVector<T>,
}

impl<T: Real> CriticalRegion<T> {
    pub fn whole_space(n: usize) -> Self {
        Self { g: DMatrix::zeros(0, n), h: DVector::zeros(0) }
    }

    /// `max_i (G δx − h)_i`, or `−∞` for the whole space.
    pub fn violation(&self, dx: &DVector<T>) -> T {
        let r = &self.g * dx - &self.h;
        r.iter().fold(T::lit(f64::NEG_INFINITY), |a, v| a.max(*v))
    }

    pub fn contains(&self, dx: &DVector<T>, tol: T) -> bool {
        self.violation(dx) <= tol
    }

    pub fn rows(&self) -> usize {
        self.h.len()
    }

    fn pruned(g: DMatrix<T>, h: DVector<T>) -> Self {
        let keep: Vec<usize> = (0..g.nrows())
            .filter(|&i| g.row(i).amax() > T::lit(ROW_PRUNE))
            .collect();
        Self {
            g: DMatrix::from_fn(keep.len(), g.ncols(), |i, j| g[(keep[i], j)]),
            h: DVector::from_fn(keep.len(), |i, _| h[keep[i]]),
        }
    }
}

const ROW_PRUNE: f64 = 1e-12;

/// One step of the affine policy `δπ̂_{k,a}(δx) = K^u δx + ff`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactStep<T: Real> {
    pub k_u: DMatrix<T>,
    /// Dual sensitivity over the one-step QP rows (control rows first, then
    /// the propagated region rows). Zero on rows that are not strongly active.
    pub k_y: DMatrix<T>,
    pub feedforward: DVector<T>,
    /// One-step QP duals at `δx_k*`.
    pub y_star: DVector<T>,
    pub strict_complementarity: bool,
    /// `‖δπ̂*_k(δx_k*) − δu_k*‖`.
    pub reconstruction_error: T,
}

impl<T: Real> ExactStep<T> {
    pub fn policy(&self, dx: &DVector<T>) -> DVector<T> {
        &self.k_u * dx + &self.feedforward
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPass<T: Real> {
    pub steps: Vec<ExactStep<T>>,
    /// `CR_0 … CR_N`.
    pub regions: Vec<CriticalRegion<T>>,
    /// `δṼ_0 … δṼ_N`.
    pub cost_to_go: Vec<CostToGo<T>>,
}

impl<T: Real> ExactPass<T> {
    pub fn gains(&self) -> Vec<DMatrix<T>> {
        self.steps.iter().map(|s| s.k_u.clone()).collect()
    }
    pub fn all_strictly_complementary(&self) -> bool {
        self.steps.iter().all(|s| s.strict_complementarity)
    }
}

/// The one-step QP at step `k` written as `min ½δuᵀR̄δu + (r̄ + M̄ᵀδx)ᵀδu`
/// over `Ĝ δu ≤ h̄ − E δx`.
///
/// Propagated region rows that `δu_k` cannot move (`G^cr_{k+1} B = 0`, as for
/// constraints of higher relative degree) only restrict `δx`; they are kept
/// out of the QP and passed straight on to the region at `k`.
#[derive(Debug, Clone)]
pub struct OneStepQp<T: Real> {
    pub r_bar: DMatrix<T>,
    pub r_vec: DVector<T>,
    pub m_bar: DMatrix<T>,
    pub g_hat: DMatrix<T>,
    pub h_bar: DVector<T>,
    pub e: DMatrix<T>,
    /// Number of leading control rows in `Ĝ`.
    pub control_rows: usize,
    /// `E_p δx ≤ h_p`: region rows independent of `δu`.
    pub param_g: DMatrix<T>,
    pub param_h: DVector<T>,
}

impl<T: Real> OneStepQp<T> {
    pub fn new(data: &QpData<T>, k: usize, next: &CostToGo<T>, region: &CriticalRegion<T>) -> Self {
        let st = &data.stages[k];
        let (n, m) = (data.state_dim(), data.control_dim());
        let p = &next.p_mat;
        let pb = p * &st.b;
        let r_bar = symmetric(&(st.hessian.view((n, n), (m, m)) + st.b.tr_mul(&pb)));
        let r_vec = &st.r + st.b.tr_mul(&next.p_vec);
        let m_bar = st.hessian.view((0, n), (n, m)) + st.a.tr_mul(&pb);
        let gb = &region.g * &st.b;
        let ga = &region.g * &st.a;
        let b_scale = T::one() + st.b.amax();
        let (moved, fixed): (Vec<usize>, Vec<usize>) = (0..region.rows())
            .partition(|&i| gb.row(i).amax() > T::lit(ROW_PRUNE) * b_scale * (T::one() + region.g.row(i).amax()));
        let ru = st.ju.nrows();
        let rr = moved.len();
        let mut g_hat = DMatrix::zeros(ru + rr, m);
        g_hat.view_mut((0, 0), (ru, m)).copy_from(&(-&st.ju));
        let mut e = DMatrix::zeros(ru + rr, n);
        let mut h_bar = DVector::zeros(ru + rr);
        h_bar.rows_mut(0, ru).copy_from(&st.cu);
        for (r, &i) in moved.iter().enumerate() {
            g_hat.row_mut(ru + r).copy_from(&gb.row(i));
            e.row_mut(ru + r).copy_from(&ga.row(i));
            h_bar[ru + r] = region.h[i];
        }
        let param_g = DMatrix::from_fn(fixed.len(), n, |r, j| ga[(fixed[r], j)]);
        let param_h = DVector::from_fn(fixed.len(), |r, _| region.h[fixed[r]]);
        Self { r_bar, r_vec, m_bar, g_hat, h_bar, e, control_rows: ru, param_g, param_h }
    }

    pub fn instance(&self, dx: &DVector<T>) -> QpInstance<T> {
        QpInstance::unconstrained(self.r_bar.clone(), &self.r_vec + self.m_bar.tr_mul(dx))
            .with_inequalities(self.g_hat.clone(), &self.h_bar - &self.e * dx)
    }
}

/// Solution and KKT sensitivities of a one-step QP at `δx_k*`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneStepSensitivity<T: Real> {
    pub du: DVector<T>,
    pub y: DVector<T>,
    pub k_u: DMatrix<T>,
    /// Zero on rows that are not strongly active.
    pub k_y: DMatrix<T>,
    pub strongly_active: Vec<usize>,
    pub strict_complementarity: bool,
}

fn symmetric<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.transpose()) * T::lit(0.5)
}

fn sensitivity_opts<T: Real>() -> QpOptions<T> {
    QpOptions { tol: T::lit(1e-10), max_iter: 200, ..QpOptions::default() }
}

/// Solves the one-step QP at `dx`, returning `(δπ̂*, ŷ*, status)`.
pub fn solve_one_step_qp<T: Real>(
    one: &OneStepQp<T>,
    dx: &DVector<T>,
) -> Result<(DVector<T>, DVector<T>, QpStatus)> {
    let sol = solve_qp(&one.instance(dx), &sensitivity_opts(), None)?;
    Ok((sol.z, sol.lambda_ineq, sol.status))
}

/// Policy Jacobians `(K^u, K^y)` from the KKT system on the strongly active
/// rows.
pub fn kkt_policy_jacobians<T: Real>(one: &OneStepQp<T>, dx: &DVector<T>, k: usize) -> Result<OneStepSensitivity<T>> {
    let inst = one.instance(dx);
    let sol = solve_qp(&inst, &sensitivity_opts(), None)?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => return Err(Error::OneStepInfeasible { step: k }),
        QpStatus::MaxIter => return Err(Error::OneStepFailed { step: k }),
    }
    let tol_act = T::lit(1e-7) * (T::one() + inst.h_ineq.amax());
    let act = active_set(&sol, &inst, tol_act);
    let strong = act.strongly_active;
    let rows: Vec<DVector<T>> = strong.iter().map(|&i| one.g_hat.row(i).transpose()).collect();
    let m = one.r_bar.nrows();
    if !full_row_rank(&rows, m) {
        return Err(Error::LicqViolated { step: k });
    }
    let n = dx.len();
    let na = strong.len();
    let ga = DMatrix::from_fn(na, m, |i, j| one.g_hat[(strong[i], j)]);
    let lu = factor_saddle(one.r_bar.clone(), &ga)?;
    let mut rhs = DMatrix::zeros(m + na, n);
    rhs.view_mut((0, 0), (m, n)).copy_from(&(-one.m_bar.transpose()));
    for (r, &i) in strong.iter().enumerate() {
        rhs.row_mut(m + r).copy_from(&(-one.e.row(i)));
    }
    let sens = lu.solve(&rhs).ok_or(Error::SingularKkt)?;
    let k_u = sens.view((0, 0), (m, n)).into_owned();
    let mut k_y = DMatrix::zeros(inst.h_ineq.len(), n);
    for (r, &i) in strong.iter().enumerate() {
        k_y.row_mut(i).copy_from(&sens.row(m + r));
    }
    Ok(OneStepSensitivity {
        du: sol.z,
        y: sol.lambda_ineq,
        k_u,
        k_y,
        strongly_active: strong,
        strict_complementarity: act.strict_complementarity,
    })
}

/// Cost-to-go at step `k` given the gains at `k`.
pub fn recurse_cost_to_go<T: Real>(
    data: &QpData<T>,
    k: usize,
    one: &OneStepQp<T>,
    next: &CostToGo<T>,
    k_u: &DMatrix<T>,
    ff: &DVector<T>,
) -> CostToGo<T> {
    let st = &data.stages[k];
    let n = data.state_dim();
    let pa = &next.p_mat * &st.a;
    let mk = &one.m_bar * k_u;
    let p_mat = st.hessian.view((0, 0), (n, n)) + st.a.tr_mul(&pa) + k_u.tr_mul(&(&one.r_bar * k_u)) + &mk + mk.transpose();
    let p_vec = &st.q
        + st.a.tr_mul(&next.p_vec)
        + k_u.tr_mul(&one.r_vec)
        + (k_u.tr_mul(&one.r_bar) + &one.m_bar) * ff;
    let v = one.r_vec.dot(ff) + T::lit(0.5) * ff.dot(&(&one.r_bar * ff)) + next.v;
    CostToGo { p_mat: symmetric(&p_mat), p_vec, v }
}

/// Region at step `k` from the sensitivities at `k` and the region at
/// `k + 1`.
///
/// Primal rows of strongly active constraints and dual rows of the others
/// are identities on the region and left out.
pub fn recurse_region<T: Real>(
    data: &QpData<T>,
    k: usize,
    one: &OneStepQp<T>,
    sens: &OneStepSensitivity<T>,
    ff: &DVector<T>,
    dx_star: &DVector<T>,
) -> CriticalRegion<T> {
    let st = &data.stages[k];
    let n = data.state_dim();
    let mut g_rows: Vec<DVector<T>> = Vec::new();
    let mut h_rows: Vec<T> = Vec::new();
    // stage-0 state rows are fixed by the initial state and left out
    if k > 0 {
        for i in 0..st.jx.nrows() {
            g_rows.push(-st.jx.row(i).transpose());
            h_rows.push(st.cx[i]);
        }
    }
    for i in 0..one.param_h.len() {
        g_rows.push(one.param_g.row(i).transpose());
        h_rows.push(one.param_h[i]);
    }
    let primal_g = &one.g_hat * &sens.k_u + &one.e;
    let primal_h = &one.h_bar - &one.g_hat * ff;
    for i in 0..one.h_bar.len() {
        if sens.strongly_active.contains(&i) {
            g_rows.push(-sens.k_y.row(i).transpose());
            h_rows.push(sens.y[i] - sens.k_y.row(i).dot(&dx_star.transpose()));
        } else {
            g_rows.push(primal_g.row(i).transpose());
            h_rows.push(primal_h[i]);
        }
    }
    let g = DMatrix::from_fn(g_rows.len(), n, |i, j| g_rows[i][j]);
    CriticalRegion::pruned(g, DVector::from_vec(h_rows))
}

/// Serial backward pass `k = N−1 … 0` around the full QP solution.
pub fn backward_pass_exact<T: Real>(
    data: &QpData<T>,
    dx_star: &[DVector<T>],
    du_star: &[DVector<T>],
) -> Result<ExactPass<T>> {
    let nh = data.horizon();
    let n = data.state_dim();
    let mut ctg = vec![
        CostToGo { p_mat: DMatrix::zeros(n, n), p_vec: DVector::zeros(n), v: T::zero() };
        nh + 1
    ];
    ctg[nh] = CostToGo { p_mat: data.terminal.hessian.clone(), p_vec: data.terminal.q.clone(), v: T::zero() };
    let mut regions = vec![CriticalRegion::whole_space(n); nh + 1];
    regions[nh] = CriticalRegion::pruned(-&data.terminal.jx, data.terminal.cx.clone());
    let mut steps = Vec::with_capacity(nh);
    for k in (0..nh).rev() {
        let one = OneStepQp::new(data, k, &ctg[k + 1], &regions[k + 1]);
        let sens = kkt_policy_jacobians(&one, &dx_star[k], k)?;
        let ff = &sens.du - &sens.k_u * &dx_star[k];
        ctg[k] = recurse_cost_to_go(data, k, &one, &ctg[k + 1], &sens.k_u, &ff);
        regions[k] = recurse_region(data, k, &one, &sens, &ff, &dx_star[k]);
        steps.push(ExactStep {
            reconstruction_error: (&sens.du - &du_star[k]).norm(),
            k_u: sens.k_u,
            k_y: sens.k_y,
            feedforward: ff,
            y_star: sens.y,
            strict_complementarity: sens.strict_complementarity,
        });
    }
    steps.reverse();
    Ok(ExactPass { steps, regions, cost_to_go: ctg })
}
