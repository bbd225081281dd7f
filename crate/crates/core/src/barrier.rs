//! Sensitivity gains from a log-barrier smoothing of the QP sub-problem.
//!
//! The barrier problem
//!
//! ```text
//! min_δu  Σ l̃_k + l̃_N − γ Σ log(c^x + J^x δx) − γ Σ log(c^u + J^u δu)
//! ```
//!
//! is smooth and strictly convex in `δu`. Pinning the state at step `k` to
//! `δx` gives the tail problem whose first-control Jacobian is `K_k(γ)`. Since
//! the pinned tail problem at `δx_k` on the barrier solution shares that
//! solution, every `K_k(γ)` is read off one Riccati factorization at the
//! un-anchored optimum, found here by a damped iLQR (Newton) iteration.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linearize::QpData;
use crate::qp::OcpQp;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct BarrierOptions<T> {
    /// Stationarity tolerance on the reduced gradient.
    pub tol: T,
    pub max_iter: usize,
    /// Weight of the interior point in the starting blend.
    pub theta: T,
    /// Barrier parameter of the interior point used for the blend.
    pub interior_mu: T,
}

impl<T: Real> Default for BarrierOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-10), max_iter: 100, theta: T::lit(1e-3), interior_mu: T::lit(0.1) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSolution<T: Real> {
    pub x: Vec<DVector<T>>,
    pub u: Vec<DVector<T>>,
    /// Riccati gains at the solution.
    pub gains: Vec<DMatrix<T>>,
    pub iterations: usize,
    /// `max |∂F/∂δu|` at the returned point.
    pub stationarity: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierGains<T: Real> {
    pub gains: Vec<DMatrix<T>>,
    pub gamma: T,
    pub iterations: usize,
    pub stationarity: T,
}

/// Per-stage barrier expansion at a point.
struct Expansion<T: Real> {
    lx: DVector<T>,
    lu: DVector<T>,
    lxx: DMatrix<T>,
    luu: DMatrix<T>,
    lux: DMatrix<T>,
}

fn inv_slacks<T: Real>(h: &DVector<T>, g: &DMatrix<T>, z: &DVector<T>) -> Option<DVector<T>> {
    let s = h - g * z;
    if s.iter().all(|v| *v > T::zero() && v.is_finite()) {
        Some(s.map(|v| T::one() / v))
    } else {
        None
    }
}

fn weighted_gram<T: Real>(g: &DMatrix<T>, w: &DVector<T>) -> DMatrix<T> {
    let mut wg = g.clone();
    for (i, mut row) in wg.row_iter_mut().enumerate() {
        row *= w[i];
    }
    g.tr_mul(&wg)
}

/// Barrier objective along a control sequence; `None` outside the domain.
fn objective<T: Real>(qp: &OcpQp<T>, gamma: T, x: &[DVector<T>], u: &[DVector<T>]) -> Option<T> {
    let mut f = qp.objective(x, u);
    for (j, st) in qp.stages.iter().enumerate() {
        if j > 0 {
            let s = &st.hx - &st.gx * &x[j];
            f -= log_sum(&s)? * gamma;
        }
        let s = &st.hu - &st.gu * &u[j];
        f -= log_sum(&s)? * gamma;
    }
    let s = &qp.terminal.hx - &qp.terminal.gx * &x[qp.horizon()];
    f -= log_sum(&s)? * gamma;
    f.is_finite().then_some(f)
}

fn log_sum<T: Real>(s: &DVector<T>) -> Option<T> {
    if s.iter().all(|v| *v > T::zero()) {
        Some(s.iter().fold(T::zero(), |a, v| a + v.ln()))
    } else {
        None
    }
}

fn expansions<T: Real>(qp: &OcpQp<T>, gamma: T, x: &[DVector<T>], u: &[DVector<T>]) -> Option<Vec<Expansion<T>>> {
    let (n, m) = (qp.state_dim(), qp.control_dim());
    qp.stages
        .par_iter()
        .enumerate()
        .map(|(j, st)| {
            let hxx = st.hess.view((0, 0), (n, n));
            let hxu = st.hess.view((0, n), (n, m));
            let hux = st.hess.view((n, 0), (m, n));
            let huu = st.hess.view((n, n), (m, m));
            let mut lx = hxx * &x[j] + hxu * &u[j] + &st.qx;
            let mut lxx = hxx.into_owned();
            if j > 0 && st.hx.len() > 0 {
                let w = inv_slacks(&st.hx, &st.gx, &x[j])?;
                lx += st.gx.tr_mul(&w) * gamma;
                lxx += weighted_gram(&st.gx, &w.component_mul(&w)) * gamma;
            }
            let mut lu = hux * &x[j] + huu * &u[j] + &st.qu;
            let mut luu = huu.into_owned();
            if st.hu.len() > 0 {
                let w = inv_slacks(&st.hu, &st.gu, &u[j])?;
                lu += st.gu.tr_mul(&w) * gamma;
                luu += weighted_gram(&st.gu, &w.component_mul(&w)) * gamma;
            }
            Some(Expansion { lx, lu, lxx, luu, lux: hux.into_owned() })
        })
        .collect()
}

struct Backward<T: Real> {
    gains: Vec<DMatrix<T>>,
    ff: Vec<DVector<T>>,
    grad: Vec<DVector<T>>,
}

/// Riccati pass for the Newton step plus the exact reduced gradient through
/// the adjoint.
fn backward<T: Real>(qp: &OcpQp<T>, gamma: T, x: &[DVector<T>], ex: &[Expansion<T>]) -> Result<Backward<T>> {
    let nh = qp.horizon();
    let xn = &x[nh];
    let t = &qp.terminal;
    let mut vx = &t.hess * xn + &t.qx;
    let mut vxx = t.hess.clone();
    if t.hx.len() > 0 {
        let w = inv_slacks(&t.hx, &t.gx, xn).ok_or_else(|| Error::Barrier("terminal iterate left the interior".into()))?;
        vx += t.gx.tr_mul(&w) * gamma;
        vxx += weighted_gram(&t.gx, &w.component_mul(&w)) * gamma;
    }
    let mut adj = vx.clone();
    let mut gains = vec![DMatrix::zeros(0, 0); nh];
    let mut ff = vec![DVector::zeros(0); nh];
    let mut grad = vec![DVector::zeros(0); nh];
    for j in (0..nh).rev() {
        let st = &qp.stages[j];
        let e = &ex[j];
        grad[j] = &e.lu + st.b.tr_mul(&adj);
        adj = &e.lx + st.a.tr_mul(&adj);

        let qx = &e.lx + st.a.tr_mul(&vx);
        let qu = &e.lu + st.b.tr_mul(&vx);
        let vb = &vxx * &st.b;
        let qxx = &e.lxx + st.a.tr_mul(&(&vxx * &st.a));
        let quu = &e.luu + st.b.tr_mul(&vb);
        let qux = &e.lux + vb.tr_mul(&st.a);
        let quu = (&quu + quu.transpose()) * T::lit(0.5);
        let chol = quu.clone().cholesky().ok_or_else(|| Error::Barrier(format!("control Hessian not positive definite at step {j}")))?;
        let k = -chol.solve(&qux);
        let d = -chol.solve(&qu);
        vx = &qx + k.tr_mul(&(&quu * &d)) + k.tr_mul(&qu) + qux.tr_mul(&d);
        let kq = k.tr_mul(&qux);
        vxx = &qxx + k.tr_mul(&(&quu * &k)) + &kq + kq.transpose();
        vxx = (&vxx + vxx.transpose()) * T::lit(0.5);
        gains[j] = k;
        ff[j] = d;
    }
    Ok(Backward { gains, ff, grad })
}

fn max_abs<T: Real>(v: &[DVector<T>]) -> T {
    v.iter().fold(T::zero(), |a, g| if g.is_empty() { a } else { a.max(g.amax()) })
}

const MAX_POLISH: usize = 3;

/// Damped iLQR on the barrier problem of `qp`, started from the strictly
/// interior control sequence `init`.
pub fn solve_barrier_ilqr<T: Real>(
    qp: &OcpQp<T>,
    gamma: T,
    init: &[DVector<T>],
    opts: &BarrierOptions<T>,
) -> Result<BarrierSolution<T>> {
    if !(gamma > T::zero()) {
        return Err(Error::Barrier("barrier weight must be positive".into()));
    }
    let mut u = init.to_vec();
    let mut x = qp.rollout(&u);
    let mut f = objective(qp, gamma, &x, &u).ok_or_else(|| Error::Barrier("initial point is not strictly interior".into()))?;
    let scale = T::one()
        + qp.stages.iter().fold(T::zero(), |a, s| a.max(s.qu.amax()).max(s.qx.amax()))
        + qp.terminal.qx.amax();
    // once the Newton decrement drops below the round-off of F the Armijo
    // test cannot rank steps, so full Newton steps are taken for as long as
    // they keep reducing the stationarity
    let mut polish: Option<(Vec<DVector<T>>, Vec<DVector<T>>, T, Vec<DMatrix<T>>)> = None;
    let mut polish_steps = 0;
    for it in 0..=opts.max_iter {
        let pass = expansions(qp, gamma, &x, &u)
            .ok_or_else(|| Error::Barrier("iterate left the interior".into()))
            .and_then(|ex| backward(qp, gamma, &x, &ex));
        let bw = match (pass, polish.take()) {
            (Ok(bw), p) => {
                polish = p;
                bw
            }
            (Err(_), Some((pu, px, ps, pg))) => {
                return Ok(BarrierSolution { x: px, u: pu, gains: pg, iterations: it, stationarity: ps })
            }
            (Err(e), None) => return Err(e),
        };
        let stat = max_abs(&bw.grad);
        if let Some((pu, px, ps, pg)) = polish.take() {
            if !(stat < ps) {
                return Ok(BarrierSolution { x: px, u: pu, gains: pg, iterations: it, stationarity: ps });
            }
        }
        if stat <= opts.tol * scale {
            return Ok(BarrierSolution { x, u, gains: bw.gains, iterations: it, stationarity: stat });
        }
        if it == opts.max_iter {
            break;
        }
        // Newton direction in u (dynamics are linear, so the closed-loop
        // update is linear in the step length)
        let mut du = Vec::with_capacity(u.len());
        let mut dxj = DVector::zeros(qp.state_dim());
        for (j, st) in qp.stages.iter().enumerate() {
            let d = &bw.ff[j] + &bw.gains[j] * &dxj;
            dxj = &st.a * &dxj + &st.b * &d;
            du.push(d);
        }
        let slope = bw.grad.iter().zip(&du).fold(T::zero(), |a, (g, d)| a + g.dot(d));
        if slope >= -T::lit(16.0) * T::machine_eps() * (T::one() + f.abs()) {
            if polish_steps == MAX_POLISH {
                return Ok(BarrierSolution { x, u, gains: bw.gains, iterations: it, stationarity: stat });
            }
            polish_steps += 1;
            let cand: Vec<DVector<T>> = u.iter().zip(&du).map(|(a, d)| a + d).collect();
            let xc = qp.rollout(&cand);
            match objective(qp, gamma, &xc, &cand) {
                Some(fc) => {
                    polish = Some((std::mem::replace(&mut u, cand), std::mem::replace(&mut x, xc), stat, bw.gains));
                    f = fc;
                    continue;
                }
                None => return Ok(BarrierSolution { x, u, gains: bw.gains, iterations: it, stationarity: stat }),
            }
        }
        let mut alpha = T::one();
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<DVector<T>> = u.iter().zip(&du).map(|(a, d)| a + d * alpha).collect();
            let xc = qp.rollout(&cand);
            if let Some(fc) = objective(qp, gamma, &xc, &cand) {
                if fc <= f + T::lit(1e-4) * alpha * slope {
                    u = cand;
                    x = xc;
                    f = fc;
                    accepted = true;
                    break;
                }
            }
            alpha *= T::lit(0.5);
        }
        if !accepted {
            return Ok(BarrierSolution { x, u, gains: bw.gains, iterations: it, stationarity: stat });
        }
    }
    Err(Error::Barrier(format!("no convergence in {} iterations", opts.max_iter)))
}

/// Barrier solution of `qp` started from the interior-shifted blend
/// `(1−θ)u_init + θ·u_int`, where `u_int` is a well-centred interior point.
pub fn solve_barrier<T: Real>(
    qp: &OcpQp<T>,
    gamma: T,
    u_init: &[DVector<T>],
    opts: &BarrierOptions<T>,
) -> Result<BarrierSolution<T>> {
    let interior = qp.central_point(opts.interior_mu, T::lit(1e-8))?;
    let mut theta = opts.theta;
    let mut last = Error::Barrier("no strictly interior blend".into());
    for _ in 0..4 {
        let start: Vec<DVector<T>> = u_init
            .iter()
            .zip(&interior.u)
            .map(|(a, b)| a * (T::one() - theta) + b * theta)
            .collect();
        match solve_barrier_ilqr(qp, gamma, &start, opts) {
            Ok(sol) => return Ok(sol),
            Err(e) => last = e,
        }
        theta = (theta * T::lit(10.0)).min(T::one());
    }
    Err(last)
}

/// `K_k(γ)` for every step, from one barrier solve of the full sub-problem
/// warm-started at the QP solution `du_star`.
pub fn barrier_gains<T: Real>(
    data: &QpData<T>,
    du_star: &[DVector<T>],
    gamma: T,
    opts: &BarrierOptions<T>,
) -> Result<BarrierGains<T>> {
    let qp = data.full_qp();
    let sol = solve_barrier(&qp, gamma, du_star, opts)?;
    if sol.gains.iter().any(|k| k.iter().any(|v| !v.is_finite())) {
        return Err(Error::Barrier("non-finite gain".into()));
    }
    Ok(BarrierGains { gains: sol.gains, gamma, iterations: sol.iterations, stationarity: sol.stationarity })
}
