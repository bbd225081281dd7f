//! The shooting SQP driver.
//!
//! One iteration: linearize, solve the QP sub-problem, compute line-search
//! gains for the chosen method, update penalties, search the step length
//! along a (closed-loop) rollout, then update primal and dual iterates.

use std::time::Instant;

use nalgebra::DVector;

use crate::barrier::{barrier_gains, BarrierOptions};
use crate::error::{Error, Result};
use crate::exact::backward_pass_exact;
use crate::linearize::{build_qp_data, residuals_from, HessianMode, LinearizeOptions, QpData};
use crate::merit::{
    init_slacks, line_search, merit_directional_derivative, merit_penalty, slack_directions_all, update_penalties,
    LineSearchOutcome, LineSearchParams,
};
use crate::models::chart::recenter_shift;
use crate::problem::{evaluate_constraints, evaluate_objective, stack, Iterate, KktResiduals, ProblemSpec};
use crate::qp::{QpOptions, QpStatus};
use crate::rollout::{closed_loop_rollout, tracking_error, tvlqr_fallback_gains, Candidate, GainSchedule, GainSource};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Open-loop rollouts.
    OpenLoop,
    /// Closed loop with exact sensitivity gains.
    ClosedLoop,
    /// Closed loop with barrier-smoothed gains.
    ClosedLoopGamma,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::OpenLoop => "OL",
            Method::ClosedLoop => "CL",
            Method::ClosedLoopGamma => "CLG",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "OL" => Ok(Method::OpenLoop),
            "CL" => Ok(Method::ClosedLoop),
            "CLG" | "CL_gamma" => Ok(Method::ClosedLoopGamma),
            _ => Err(format!("unknown method `{s}`, expected one of OL, CL, CLG")),
        }
    }
}

/// Barrier weight per SQP iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSchedule<T> {
    Fixed(T),
    /// `max(start · factor^i, floor)`.
    Geometric { start: T, factor: T, floor: T },
}

impl<T: Real> GammaSchedule<T> {
    pub fn at(&self, iter: usize) -> T {
        match *self {
            GammaSchedule::Fixed(g) => g,
            GammaSchedule::Geometric { start, factor, floor } => {
                let p = i32::try_from(iter).unwrap_or(i32::MAX);
                (start * factor.powi(p)).max(floor)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions<T: Real> {
    pub method: Method,
    pub max_iters: usize,
    pub tol_primal: T,
    pub tol_dual: T,
    pub gamma: GammaSchedule<T>,
    pub hessian_mode: HessianMode,
    pub line_search: LineSearchParams<T>,
    pub eps_psd: T,
    pub qp: QpOptions<T>,
    pub barrier: BarrierOptions<T>,
    /// Re-centre angle windows after every step.
    pub recenter_charts: bool,
    /// Also run the exact recursion for its reconstruction error when the
    /// method does not need it.
    pub diagnose_exact: bool,
    /// Record closed-form and finite-difference merit slopes per iteration.
    pub record_merit_checks: bool,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            method: Method::ClosedLoopGamma,
            max_iters: 100,
            tol_primal: T::lit(1e-3),
            tol_dual: T::lit(1e-3),
            gamma: GammaSchedule::Fixed(T::lit(1e-4)),
            hessian_mode: HessianMode::Full,
            line_search: LineSearchParams::default(),
            eps_psd: T::lit(1e-6),
            qp: QpOptions::default(),
            barrier: BarrierOptions::default(),
            recenter_charts: true,
            diagnose_exact: false,
            record_merit_checks: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StallReason {
    QpInfeasible,
    QpFailed,
    LineSearch,
}

impl StallReason {
    pub fn label(self) -> &'static str {
        match self {
            StallReason::QpInfeasible => "qp-infeasible",
            StallReason::QpFailed => "qp-failed",
            StallReason::LineSearch => "line-search",
        }
    }
}

/// Merit slopes at one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeritCheck<T> {
    /// `φ′(0)` before the penalty update.
    pub slope_before: T,
    /// `φ′(0; ρ⁺)`, closed form.
    pub slope: T,
    /// One-sided finite difference of `φ(α; ρ⁺)` at `0⁺`.
    pub slope_fd: T,
    /// `Δ*`.
    pub delta: T,
    pub phi0: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T: Real> {
    pub iter: usize,
    pub alpha: T,
    pub objective: T,
    /// `min c` after the step (negative is infeasible).
    pub max_violation: T,
    pub stationarity: T,
    pub complementarity: T,
    pub time_qp_s: f64,
    pub time_gains_s: f64,
    pub time_linesearch_s: f64,
    pub gain_source: Option<GainSource>,
    pub used_fallback: bool,
    pub phi0: T,
    pub phi: T,
    pub slope: T,
    pub penalty_max: T,
    pub gamma: Option<T>,
    /// `‖δπ̂*_k(δx_k*) − δu_k*‖` per step, when the exact pass ran.
    pub reconstruction: Option<Vec<T>>,
    /// `‖δu_k*‖` per step.
    pub step_norms: Vec<T>,
    /// `max_k ‖δx_k[α] − αδx_k*‖` of the accepted candidate.
    pub tracking_error: T,
    pub merit_check: Option<MeritCheck<T>>,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T: Real> {
    pub converged: bool,
    pub stall: Option<(usize, StallReason)>,
    pub iterations: Vec<IterationRecord<T>>,
    pub final_iterate: Iterate<T>,
    pub final_residuals: KktResiduals<T>,
    pub final_objective: T,
    pub final_violation: T,
    pub spec: ProblemSpec<T>,
}

impl<T: Real> SolveReport<T> {
    pub fn iteration_count(&self) -> usize {
        self.iterations.len()
    }
}

/// Termination test with `τ_x = τ_p(1 + ‖u‖)`, `τ_y = τ_d(1 + ‖y‖)`:
///
/// ```text
/// c ≥ −τ_x,  y ≥ −τ_y,  ‖c ∘ y‖∞ ≤ τ_y,  ‖∇_u Ĥ‖∞ ≤ τ_y
/// ```
///
/// All comparisons are inclusive.
pub fn check_termination<T: Real>(res: &KktResiduals<T>, iterate: &Iterate<T>, tol_primal: T, tol_dual: T) -> bool {
    let tx = tol_primal * (T::one() + iterate.control_norm());
    let ty = tol_dual * (T::one() + iterate.dual_norm());
    res.min_primal >= -tx && res.min_dual >= -ty && res.max_complementarity <= ty && res.max_stationarity <= ty
}

/// Gains for the line-search rollout, with the fallback chain
/// exact → barrier → TV-LQR. Returns the schedule and whether a fallback
/// was used.
pub fn compute_gains<T: Real>(
    method: Method,
    spec: &ProblemSpec<T>,
    iterate: &Iterate<T>,
    data: &QpData<T>,
    dx_star: &[DVector<T>],
    du_star: &[DVector<T>],
    gamma: T,
    opts: &SolverOptions<T>,
) -> Result<(GainSchedule<T>, bool)> {
    let barrier = || barrier_gains(data, du_star, gamma, &opts.barrier).map(|g| GainSchedule::uniform(g.gains, GainSource::Barrier));
    let tvlqr = || tvlqr_fallback_gains(spec, iterate, data, opts.eps_psd);
    match method {
        Method::OpenLoop => Ok((GainSchedule::zero(spec.horizon(), spec.state_dim(), spec.control_dim()), false)),
        Method::ClosedLoop => match backward_pass_exact(data, dx_star, du_star) {
            Ok(pass) => Ok((GainSchedule::uniform(pass.gains(), GainSource::Exact), false)),
            Err(e) => {
                log::debug!("exact gains failed ({e}), trying barrier gains");
                match barrier() {
                    Ok(g) => Ok((g, true)),
                    Err(e) => {
                        log::debug!("barrier gains failed ({e}), using TV-LQR");
                        Ok((tvlqr()?, true))
                    }
                }
            }
        },
        Method::ClosedLoopGamma => match barrier() {
            Ok(g) => Ok((g, false)),
            Err(e) => {
                log::debug!("barrier gains failed ({e}), using TV-LQR");
                Ok((tvlqr()?, true))
            }
        },
    }
}

/// Per-iteration data shared by the merit evaluations.
struct MeritModel<'a, T: Real> {
    spec: &'a ProblemSpec<T>,
    iterate: &'a Iterate<T>,
    du: &'a [DVector<T>],
    dx: &'a [DVector<T>],
    dy: &'a [DVector<T>],
    s: &'a [DVector<T>],
    ds: &'a [DVector<T>],
    rho: &'a [T],
}

impl<T: Real> MeritModel<'_, T> {
    fn candidate(&self, gains: &GainSchedule<T>, alpha: T) -> Option<Candidate<T>> {
        closed_loop_rollout(self.spec, self.iterate, self.du, self.dx, gains, alpha).ok()
    }

    fn value_of(&self, cand: &Candidate<T>, alpha: T) -> T {
        let (Ok(j), Ok(c)) = (evaluate_objective(self.spec, &cand.x, &cand.u), evaluate_constraints(self.spec, &cand.x, &cand.u))
        else {
            return T::lit(f64::INFINITY);
        };
        let y: Vec<DVector<T>> = self.iterate.y.iter().zip(self.dy).map(|(y, d)| y + d * alpha).collect();
        let s: Vec<DVector<T>> = self.s.iter().zip(self.ds).map(|(s, d)| s + d * alpha).collect();
        let v = j + merit_penalty(&c, &y, &s, self.rho);
        if v.is_finite() {
            v
        } else {
            T::lit(f64::INFINITY)
        }
    }

    fn phi(&self, gains: &GainSchedule<T>, alpha: T) -> T {
        match self.candidate(gains, alpha) {
            Some(c) => self.value_of(&c, alpha),
            None => T::lit(f64::INFINITY),
        }
    }
}

fn min_entry<T: Real>(c: &[DVector<T>]) -> T {
    let m = c.iter().flat_map(|v| v.iter()).fold(T::lit(f64::INFINITY), |a, v| a.min(*v));
    if m.is_finite() {
        m
    } else {
        T::zero()
    }
}

fn recentred_spec<T: Real>(spec: &ProblemSpec<T>, x: &[DVector<T>]) -> Result<ProblemSpec<T>> {
    let dims = spec.dynamics().angular_dims().to_vec();
    if dims.is_empty() {
        return Ok(spec.clone());
    }
    let step = T::frac_pi_2();
    let shifts = spec
        .chart_shifts()
        .iter()
        .zip(x)
        .map(|(prev, xk)| DVector::from_fn(dims.len(), |i, _| recenter_shift(xk[dims[i]], prev[i], step)))
        .collect();
    spec.with_chart_shifts(shifts)
}

/// Runs the SQP loop from the control sequence `u_init`.
pub fn sqp_solve<T: Real>(spec: &ProblemSpec<T>, u_init: Vec<DVector<T>>, opts: &SolverOptions<T>) -> Result<SolveReport<T>> {
    let mut spec = spec.clone();
    let mut it = Iterate::cold_start(&spec, u_init)?;
    if opts.recenter_charts {
        spec = recentred_spec(&spec, &it.x)?;
    }
    let c0 = spec.state_constraint_values(0, spec.x0());
    if c0.iter().any(|v| *v < T::zero()) {
        return Err(Error::InvalidProblem("initial state violates the state constraints".into()));
    }
    let lin = LinearizeOptions { mode: opts.hessian_mode, eps_psd: opts.eps_psd, second_order: true };
    let nh = spec.horizon();
    let mut records = Vec::new();
    let mut stall = None;
    let mut converged = false;

    for iter in 0..=opts.max_iters {
        let c = evaluate_constraints(&spec, &it.x, &it.u)?;
        let t_qp = Instant::now();
        let data = build_qp_data(&spec, &it, &lin)?;
        let res = residuals_from(&data, &c, &it.y);
        if check_termination(&res, &it, opts.tol_primal, opts.tol_dual) {
            converged = true;
            break;
        }
        if iter == opts.max_iters {
            break;
        }

        let sol = data.full_qp().solve(&opts.qp)?;
        let finite = sol.x.iter().chain(&sol.u).chain(&sol.lam_x).chain(&sol.lam_u).all(|v| v.iter().all(|e| e.is_finite()));
        if !finite {
            stall = Some((iter, StallReason::QpFailed));
            break;
        }
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible => {
                stall = Some((iter, StallReason::QpInfeasible));
                break;
            }
            QpStatus::MaxIter if sol.kkt_error <= opts.qp.tol.sqrt() => {}
            QpStatus::MaxIter => {
                stall = Some((iter, StallReason::QpFailed));
                break;
            }
        }
        let time_qp = t_qp.elapsed().as_secs_f64();
        let (dx, du) = (&sol.x, &sol.u);
        let y_hat: Vec<DVector<T>> = (0..=nh)
            .map(|k| if k == nh { sol.lam_x[k].clone() } else { stack(&sol.lam_x[k], &sol.lam_u[k]) })
            .collect();

        let t_gains = Instant::now();
        let gamma = opts.gamma.at(iter);
        let (gains, used_fallback) = compute_gains(opts.method, &spec, &it, &data, dx, du, gamma, opts)?;
        let reconstruction = if opts.method == Method::ClosedLoop || opts.diagnose_exact {
            backward_pass_exact(&data, dx, du)
                .ok()
                .map(|p| p.steps.iter().map(|s| s.reconstruction_error).collect())
        } else {
            None
        };
        let time_gains = t_gains.elapsed().as_secs_f64();

        // slacks, penalties, merit slope
        let t_ls = Instant::now();
        let s: Vec<DVector<T>> = (0..=nh).map(|k| init_slacks(&c[k], &it.y[k], it.rho[k])).collect();
        let ds = slack_directions_all(&data, &c, dx, du, &s);
        let dy: Vec<DVector<T>> = y_hat.iter().zip(&it.y).map(|(a, b)| a - b).collect();
        let g_dot = data.gradient_dot(dx, du);
        let delta = data.curvature(dx, du).max(T::zero());
        let slope_before = merit_directional_derivative(g_dot, &c, &it.y, &y_hat, &s, &it.rho);
        let rho = update_penalties(&it.rho, g_dot, delta, &c, &it.y, &y_hat, &s);
        let slope = merit_directional_derivative(g_dot, &c, &it.y, &y_hat, &s, &rho);
        let phi0 = evaluate_objective(&spec, &it.x, &it.u)? + merit_penalty(&c, &it.y, &s, &rho);

        let model = MeritModel { spec: &spec, iterate: &it, du, dx, dy: &dy, s: &s, ds: &ds, rho: &rho };
        let merit_check = opts.record_merit_checks.then(|| MeritCheck {
            slope_before,
            slope,
            slope_fd: crate::oracle::fd_merit_derivative(|a| model.phi(&gains, a), T::lit(1e-6)),
            delta,
            phi0,
        });

        let mut gains = gains;
        let mut used_fallback = used_fallback;
        let negligible = slope > -T::lit(1e-14) * (T::one() + phi0.abs());
        let mut outcome = if negligible {
            // the primal step is round-off; take it to move the duals
            LineSearchOutcome::Accepted { alpha: T::one(), phi: model.phi(&gains, T::one()), evals: 1 }
        } else {
            line_search(|a| model.phi(&gains, a), phi0, slope, &opts.line_search)
        };
        let mut stalled_here = false;
        if matches!(outcome, LineSearchOutcome::Failed { .. }) && opts.method != Method::OpenLoop {
            if gains.source() != Some(GainSource::TvLqr) {
                gains = tvlqr_fallback_gains(&spec, &it, &data, opts.eps_psd)?;
                used_fallback = true;
                outcome = line_search(|a| model.phi(&gains, a), phi0, slope, &opts.line_search);
            }
        }
        let (alpha, phi) = match outcome {
            LineSearchOutcome::Accepted { alpha, phi, .. } => (alpha, phi),
            LineSearchOutcome::Failed { best_alpha, best_phi, .. } => {
                stalled_here = true;
                (best_alpha, best_phi)
            }
        };
        let cand = model.candidate(&gains, alpha);
        let time_ls = t_ls.elapsed().as_secs_f64();
        let Some(cand) = cand.filter(|_| phi.is_finite()) else {
            stall = Some((iter, StallReason::LineSearch));
            break;
        };
        let track = tracking_error(&cand, &it, dx, alpha);

        // update
        it.y = it.y.iter().zip(&dy).map(|(y, d)| y + d * alpha).collect();
        it.u = cand.u;
        it.x = cand.x;
        it.rho = rho;
        if opts.recenter_charts {
            spec = recentred_spec(&spec, &it.x)?;
        }
        let c_new = evaluate_constraints(&spec, &it.x, &it.u)?;
        it.s = (0..=nh).map(|k| init_slacks(&c_new[k], &it.y[k], it.rho[k])).collect();
        let objective = evaluate_objective(&spec, &it.x, &it.u)?;
        let after = build_qp_data(&spec, &it, &LinearizeOptions::first_order())
            .map(|d| residuals_from(&d, &c_new, &it.y))
            .unwrap_or(res);
        log::debug!(
            "iter {iter}: alpha {:.3e} obj {:.6e} viol {:.3e} gains {:?}",
            alpha.to_f64_lossy(),
            objective.to_f64_lossy(),
            after.min_primal.to_f64_lossy(),
            gains.source()
        );
        records.push(IterationRecord {
            iter,
            alpha,
            objective,
            max_violation: after.min_primal,
            stationarity: after.max_stationarity,
            complementarity: after.max_complementarity,
            time_qp_s: time_qp,
            time_gains_s: time_gains,
            time_linesearch_s: time_ls,
            gain_source: gains.source(),
            used_fallback,
            phi0,
            phi,
            slope,
            penalty_max: it.rho.iter().fold(T::zero(), |a, r| a.max(*r)),
            gamma: (opts.method == Method::ClosedLoopGamma).then_some(gamma),
            reconstruction,
            step_norms: du.iter().map(|d| d.norm()).collect(),
            tracking_error: track,
            merit_check,
        });
        if stalled_here {
            stall = Some((iter, StallReason::LineSearch));
            break;
        }
    }

    let c = evaluate_constraints(&spec, &it.x, &it.u)?;
    let data = build_qp_data(&spec, &it, &LinearizeOptions::first_order())?;
    let final_residuals = residuals_from(&data, &c, &it.y);
    Ok(SolveReport {
        converged,
        stall,
        iterations: records,
        final_objective: evaluate_objective(&spec, &it.x, &it.u)?,
        final_violation: min_entry(&c),
        final_iterate: it,
        final_residuals,
        spec,
    })
}

/// Convenience: the gains a method would use at the first iterate.
pub fn first_iteration_gains<T: Real>(
    spec: &ProblemSpec<T>,
    u_init: Vec<DVector<T>>,
    opts: &SolverOptions<T>,
) -> Result<(GainSchedule<T>, Vec<DVector<T>>, Vec<DVector<T>>)> {
    let it = Iterate::cold_start(spec, u_init)?;
    let lin = LinearizeOptions { mode: opts.hessian_mode, eps_psd: opts.eps_psd, second_order: true };
    let data = build_qp_data(spec, &it, &lin)?;
    let sol = data.full_qp().solve(&opts.qp)?;
    let (g, _) = compute_gains(opts.method, spec, &it, &data, &sol.x, &sol.u, opts.gamma.at(0), opts)?;
    Ok((g, sol.x, sol.u))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residuals(p: f64, d: f64, c: f64, s: f64) -> KktResiduals<f64> {
        KktResiduals { min_primal: p, min_dual: d, max_complementarity: c, max_stationarity: s }
    }

    fn iterate(u: f64, y: f64) -> Iterate<f64> {
        Iterate {
            u: vec![DVector::from_element(1, u)],
            x: vec![],
            y: vec![DVector::from_element(1, y)],
            s: vec![],
            rho: vec![],
        }
    }

    #[test]
    fn termination_thresholds_are_inclusive() {
        let it = iterate(3.0, 0.0);
        // τ_x = 1e-3·4, τ_y = 1e-3·1
        assert!(check_termination(&residuals(-4e-3, -1e-3, 1e-3, 1e-3), &it, 1e-3, 1e-3));
        assert!(!check_termination(&residuals(-4.0001e-3, 0.0, 0.0, 0.0), &it, 1e-3, 1e-3));
        assert!(!check_termination(&residuals(-10.0 * 4e-3, 0.0, 0.0, 0.0), &it, 1e-3, 1e-3));
        assert!(!check_termination(&residuals(0.0, 0.0, 0.0, 1.1e-3), &it, 1e-3, 1e-3));
    }

    #[test]
    fn gamma_schedule_floors() {
        let g = GammaSchedule::Geometric { start: 1e-3, factor: 0.1, floor: 1e-5 };
        assert_eq!(g.at(0), 1e-3);
        assert!((g.at(1) - 1e-4_f64).abs() < 1e-18);
        assert_eq!(g.at(7), 1e-5);
        assert_eq!(GammaSchedule::Fixed(1e-4).at(30), 1e-4);
    }

    #[test]
    fn method_parsing_names_choices() {
        assert_eq!("CLG".parse::<Method>(), Ok(Method::ClosedLoopGamma));
        let err = "foo".parse::<Method>().unwrap_err();
        assert!(err.contains("OL") && err.contains("CLG"));
    }
}
