//! Closed-loop line-search rollouts and TV-LQR fallback gains.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linearize::{project_psd, QpData};
use crate::problem::{Iterate, ProblemSpec};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GainSource {
    Exact,
    Barrier,
    TvLqr,
    /// Open loop.
    Zero,
}

impl GainSource {
    pub fn label(self) -> &'static str {
        match self {
            GainSource::Exact => "exact",
            GainSource::Barrier => "barrier",
            GainSource::TvLqr => "tvlqr",
            GainSource::Zero => "zero",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule<T: Real> {
    pub gains: Vec<DMatrix<T>>,
    pub sources: Vec<GainSource>,
}

impl<T: Real> GainSchedule<T> {
    pub fn zero(horizon: usize, n: usize, m: usize) -> Self {
        Self { gains: vec![DMatrix::zeros(m, n); horizon], sources: vec![GainSource::Zero; horizon] }
    }

    pub fn uniform(gains: Vec<DMatrix<T>>, source: GainSource) -> Self {
        let sources = vec![source; gains.len()];
        Self { gains, sources }
    }

    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// The common source tag, if every step shares one.
    pub fn source(&self) -> Option<GainSource> {
        let first = *self.sources.first()?;
        self.sources.iter().all(|s| *s == first).then_some(first)
    }
}

/// A line-search candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T: Real> {
    pub u: Vec<DVector<T>>,
    pub x: Vec<DVector<T>>,
}

/// Forward pass
///
/// ```text
/// δu_k[α] = clip(α δu_k* + K_k(δx_k[α] − α δx_k*)),   δx_0[α] = 0
/// ```
///
/// through the nonlinear dynamics, with the clip onto `[u̲ − u_k, u̅ − u_k]`.
/// Steps tagged [`GainSource::Zero`] skip the feedback term, so an all-zero
/// schedule reproduces the open-loop rollout of `clip(u + αδu*)` bit for bit.
pub fn closed_loop_rollout<T: Real>(
    spec: &ProblemSpec<T>,
    iterate: &Iterate<T>,
    du_star: &[DVector<T>],
    dx_star: &[DVector<T>],
    gains: &GainSchedule<T>,
    alpha: T,
) -> Result<Candidate<T>> {
    let nh = spec.horizon();
    if gains.horizon() != nh || du_star.len() != nh || dx_star.len() != nh + 1 {
        return Err(Error::Dimension("rollout inputs do not match the horizon".into()));
    }
    let dynamics = spec.dynamics();
    let mut x = Vec::with_capacity(nh + 1);
    let mut u = Vec::with_capacity(nh);
    x.push(spec.x0().clone());
    for k in 0..nh {
        let mut target = &iterate.u[k] + &du_star[k] * alpha;
        if gains.sources[k] != GainSource::Zero {
            let dev = (&x[k] - &iterate.x[k]) - &dx_star[k] * alpha;
            target += &gains.gains[k] * dev;
        }
        let uk = spec.clip_control(&target);
        let next = dynamics.step(k, &x[k], &uk);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedRollout { step: k + 1 });
        }
        u.push(uk);
        x.push(next);
    }
    Ok(Candidate { u, x })
}

/// `max_k ‖δx_k[α] − α δx_k*‖`.
pub fn tracking_error<T: Real>(cand: &Candidate<T>, iterate: &Iterate<T>, dx_star: &[DVector<T>], alpha: T) -> T {
    cand.x
        .iter()
        .zip(&iterate.x)
        .zip(dx_star)
        .fold(T::zero(), |a, ((xn, xo), d)| a.max(((xn - xo) - d * alpha).norm()))
}

/// Classical Riccati gains for `(A_k, B_k)` with stage weights over `(x, u)`.
///
/// Weights are projected onto the PSD cone; a control block with minimum
/// eigenvalue below `eps` is shifted up to `eps`.
pub fn riccati_gains<T: Real>(
    a: &[DMatrix<T>],
    b: &[DMatrix<T>],
    stage_hess: &[DMatrix<T>],
    terminal_hess: &DMatrix<T>,
    eps: T,
) -> Result<Vec<DMatrix<T>>> {
    let nh = a.len();
    let n = terminal_hess.nrows();
    let mut p = project_psd(terminal_hess, T::zero())?;
    let mut gains = vec![DMatrix::zeros(0, 0); nh];
    for k in (0..nh).rev() {
        let h = project_psd(&stage_hess[k], T::zero())?;
        let m = b[k].ncols();
        let pb = &p * &b[k];
        let mut quu = h.view((n, n), (m, m)) + b[k].tr_mul(&pb);
        quu = (&quu + quu.transpose()) * T::lit(0.5);
        let lmin = if m > 0 { quu.symmetric_eigenvalues().min() } else { T::zero() };
        if lmin < eps {
            for i in 0..m {
                quu[(i, i)] += eps - lmin;
            }
        }
        let qux = h.view((n, 0), (m, n)) + pb.tr_mul(&a[k]);
        let chol = quu.clone().cholesky().ok_or(Error::SingularKkt)?;
        let gain = -chol.solve(&qux);
        let next = h.view((0, 0), (n, n)) + a[k].tr_mul(&(&p * &a[k])) + qux.tr_mul(&gain);
        p = (&next + next.transpose()) * T::lit(0.5);
        gains[k] = gain;
    }
    Ok(gains)
}

/// TV-LQR gains from the linearized dynamics and the objective Hessian (no
/// constraint or dynamics curvature).
pub fn tvlqr_fallback_gains<T: Real>(
    spec: &ProblemSpec<T>,
    iterate: &Iterate<T>,
    data: &QpData<T>,
    eps: T,
) -> Result<GainSchedule<T>> {
    let obj = spec.objective();
    let a: Vec<_> = data.stages.iter().map(|s| s.a.clone()).collect();
    let b: Vec<_> = data.stages.iter().map(|s| s.b.clone()).collect();
    let hess: Vec<_> = (0..spec.horizon())
        .map(|k| obj.stage_expansion(k, &iterate.x[k], &iterate.u[k]).1)
        .collect();
    let (_, hn) = obj.terminal_expansion(&iterate.x[spec.horizon()]);
    Ok(GainSchedule::uniform(riccati_gains(&a, &b, &hess, &hn, eps)?, GainSource::TvLqr))
}
