//! Augmented Lagrangian merit function, slacks, penalty update and the step
//! size search.
//!
//! ```text
//! φ = Σ_k l_k − y_kᵀ(c_k − s_k) + ρ_k/2 ‖c_k − s_k‖²   (+ terminal terms)
//! ```
//!
//! Penalties are per time step: `ρ_k` weighs every row of `c_k`.

use nalgebra::DVector;

use crate::error::Result;
use crate::linearize::QpData;
use crate::problem::{evaluate_constraints, evaluate_objective, ProblemSpec};
use crate::scalar::Real;

/// `s = max(0, c)` when `ρ = 0`, otherwise `max(0, c − y/ρ)`.
pub fn init_slacks<T: Real>(c: &DVector<T>, y: &DVector<T>, rho: T) -> DVector<T> {
    if rho == T::zero() {
        c.map(|v| v.max(T::zero()))
    } else {
        c.zip_map(y, |ci, yi| (ci - yi / rho).max(T::zero()))
    }
}

/// `δs = c + J^x δx + J^u δu − s`, the slack of the linearized constraints
/// at the QP step. `ju` is empty at the terminal step.
pub fn slack_directions<T: Real>(
    c: &DVector<T>,
    jx: &nalgebra::DMatrix<T>,
    ju: &nalgebra::DMatrix<T>,
    dx: &DVector<T>,
    du: &DVector<T>,
    s: &DVector<T>,
) -> DVector<T> {
    let rx = jx.nrows();
    let mut lin = c - s;
    lin.rows_mut(0, rx).axpy(T::one(), &(jx * dx), T::one());
    if ju.nrows() > 0 {
        lin.rows_mut(rx, ju.nrows()).axpy(T::one(), &(ju * du), T::one());
    }
    lin
}

/// Slack directions for the whole horizon from assembled QP data.
pub fn slack_directions_all<T: Real>(
    data: &QpData<T>,
    c: &[DVector<T>],
    dx: &[DVector<T>],
    du: &[DVector<T>],
    s: &[DVector<T>],
) -> Vec<DVector<T>> {
    let nh = data.horizon();
    let mut out: Vec<DVector<T>> = data
        .stages
        .iter()
        .enumerate()
        .map(|(k, st)| slack_directions(&c[k], &st.jx, &st.ju, &dx[k], &du[k], &s[k]))
        .collect();
    let empty = nalgebra::DMatrix::zeros(0, data.control_dim());
    out.push(slack_directions(&c[nh], &data.terminal.jx, &empty, &dx[nh], &DVector::zeros(0), &s[nh]));
    out
}

/// Merit terms beyond the objective, given constraint values.
pub fn merit_penalty<T: Real>(c: &[DVector<T>], y: &[DVector<T>], s: &[DVector<T>], rho: &[T]) -> T {
    c.iter()
        .zip(y)
        .zip(s)
        .zip(rho)
        .fold(T::zero(), |acc, (((ck, yk), sk), rk)| {
            let d = ck - sk;
            acc - yk.dot(&d) + *rk * T::lit(0.5) * d.norm_squared()
        })
}

/// Merit value along a given trajectory.
pub fn merit_value<T: Real>(
    spec: &ProblemSpec<T>,
    x: &[DVector<T>],
    u: &[DVector<T>],
    y: &[DVector<T>],
    s: &[DVector<T>],
    rho: &[T],
) -> Result<T> {
    let j = evaluate_objective(spec, x, u)?;
    let c = evaluate_constraints(spec, x, u)?;
    Ok(j + merit_penalty(&c, y, s, rho))
}

/// Closed form `φ′(0) = gᵀδ + Σ (2y_k − ŷ_k)ᵀ(c_k − s_k) − ρ_k‖c_k − s_k‖²`,
/// where `gᵀδ` is the objective directional derivative along the QP step.
pub fn merit_directional_derivative<T: Real>(
    g_dot: T,
    c: &[DVector<T>],
    y: &[DVector<T>],
    y_hat: &[DVector<T>],
    s: &[DVector<T>],
    rho: &[T],
) -> T {
    (0..c.len()).fold(g_dot, |acc, k| acc + step_slope(&c[k], &y[k], &y_hat[k], &s[k], rho[k]))
}

fn step_slope<T: Real>(c: &DVector<T>, y: &DVector<T>, y_hat: &DVector<T>, s: &DVector<T>, rho: T) -> T {
    let d = c - s;
    (y * T::lit(2.0) - y_hat).dot(&d) - rho * d.norm_squared()
}

/// Rows with `‖c_k − s_k‖∞` at or below this are treated as satisfied by the
/// penalty update.
const PENALTY_GAP: f64 = 1e-10;

/// Penalty update guaranteeing `φ′(0; ρ⁺) ≤ −½Δ*`.
///
/// `psi` is the QP model decrease `gᵀδ + ½Δ*`. Steps whose gap `c_k − s_k` is
/// numerically zero are left alone; their (tiny) slope contribution is folded
/// into the budget of the others so the bound holds exactly.
#[allow(clippy::too_many_arguments)]
pub fn update_penalties<T: Real>(
    rho: &[T],
    g_dot: T,
    delta: T,
    c: &[DVector<T>],
    y: &[DVector<T>],
    y_hat: &[DVector<T>],
    s: &[DVector<T>],
) -> Vec<T> {
    let half = T::lit(0.5) * delta;
    if merit_directional_derivative(g_dot, c, y, y_hat, s, rho) <= -half {
        return rho.to_vec();
    }
    let psi = g_dot + half;
    let gap = T::lit(PENALTY_GAP);
    let (inside, outside): (Vec<usize>, Vec<usize>) =
        (0..c.len()).partition(|&k| (&c[k] - &s[k]).iter().any(|v| v.abs() > gap));
    if inside.is_empty() {
        return rho.to_vec();
    }
    let leak = outside
        .iter()
        .fold(T::zero(), |a, &k| a + step_slope(&c[k], &y[k], &y_hat[k], &s[k], rho[k]));
    let share = (psi + leak) / T::from_usize(inside.len()).unwrap();
    let mut out = rho.to_vec();
    for k in inside {
        let d = &c[k] - &s[k];
        let rho_hat = (share + (&y[k] * T::lit(2.0) - &y_hat[k]).dot(&d)) / d.norm_squared();
        out[k] = (T::lit(2.0) * rho[k]).max(rho_hat);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchParams<T> {
    /// Sufficient decrease ratio.
    pub sigma: T,
    /// Curvature ratio.
    pub eta: T,
    pub alpha_min: T,
    pub max_evals: usize,
}

impl<T: Real> Default for LineSearchParams<T> {
    fn default() -> Self {
        Self { sigma: T::lit(0.4), eta: T::lit(0.49), alpha_min: T::lit(1e-5), max_evals: 60 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineSearchOutcome<T> {
    Accepted { alpha: T, phi: T, evals: usize },
    /// No step passed; `best_*` is the lowest merit seen at `α ≥ α̲`.
    Failed { best_alpha: T, best_phi: T, evals: usize },
}

/// Central difference step used for `φ′(α)`.
pub fn fd_step<T: Real>(alpha: T) -> T {
    T::lit(1e-6) * (T::one() + alpha)
}

fn quadratic_min<T: Real>(lo: T, f_lo: T, d_lo: T, hi: T, f_hi: T) -> Option<T> {
    let w = hi - lo;
    let curv = f_hi - f_lo - d_lo * w;
    if curv > T::zero() && curv.is_finite() {
        Some(lo - d_lo * w * w / (T::lit(2.0) * curv))
    } else {
        None
    }
}

fn safeguard<T: Real>(cand: Option<T>, lo: T, hi: T, lo_frac: T, hi_frac: T) -> T {
    let w = hi - lo;
    let (a, b) = (lo + lo_frac * w, lo + hi_frac * w);
    match cand {
        Some(c) if c.is_finite() => c.clamp(a, b),
        _ => b,
    }
}

/// Backtracking search with safeguarded quadratic interpolation and a zoom
/// phase for the curvature condition
///
/// ```text
/// φ(α) ≤ φ(0) + σαφ′(0),   |φ′(α)| ≤ −ηφ′(0)
/// ```
///
/// The full step is also accepted when it passes the decrease test and the
/// merit is still descending there (`φ′(1) < 0`), since longer steps are not
/// considered.
pub fn line_search<T: Real, F: FnMut(T) -> T>(
    mut phi: F,
    phi0: T,
    dphi0: T,
    params: &LineSearchParams<T>,
) -> LineSearchOutcome<T> {
    let mut evals = 0usize;
    let mut best = (T::zero(), T::lit(f64::INFINITY));
    if !(dphi0 < T::zero()) || !phi0.is_finite() {
        return LineSearchOutcome::Failed { best_alpha: params.alpha_min, best_phi: best.1, evals };
    }
    let curvature = -params.eta * dphi0;
    let (mut lo, mut f_lo, mut d_lo) = (T::zero(), phi0, dphi0);
    let mut hi = T::one();
    let mut f_hi = T::lit(f64::INFINITY);
    let mut alpha = T::one();

    while evals < params.max_evals && alpha >= params.alpha_min {
        let fa = phi(alpha);
        evals += 1;
        if fa.is_finite() && fa < best.1 {
            best = (alpha, fa);
        }
        let armijo = fa.is_finite() && fa <= phi0 + params.sigma * alpha * dphi0;
        if !armijo || fa >= f_lo && lo > T::zero() {
            hi = alpha;
            f_hi = fa;
            let cand = if fa.is_finite() { quadratic_min(lo, f_lo, d_lo, alpha, fa) } else { None };
            let (a, b) = if lo == T::zero() { (T::lit(0.1), T::lit(0.5)) } else { (T::lit(0.1), T::lit(0.9)) };
            alpha = safeguard(cand, lo, hi, a, b);
            continue;
        }
        let h = fd_step(alpha);
        let (fp, fm) = (phi(alpha + h), phi(alpha - h));
        evals += 2;
        let da = (fp - fm) / (T::lit(2.0) * h);
        if !da.is_finite() {
            hi = alpha;
            f_hi = fa;
            alpha = safeguard(None, lo, hi, T::lit(0.1), T::lit(0.5));
            continue;
        }
        if da.abs() <= curvature || (alpha == T::one() && da < T::zero()) {
            return LineSearchOutcome::Accepted { alpha, phi: fa, evals };
        }
        if da > T::zero() {
            hi = alpha;
            f_hi = fa;
            let cand = quadratic_min(lo, f_lo, d_lo, alpha, fa);
            alpha = safeguard(cand, lo, hi, T::lit(0.1), T::lit(0.9));
        } else {
            // still descending: move the lower end up and search towards hi
            lo = alpha;
            f_lo = fa;
            d_lo = da;
            let cand = if f_hi.is_finite() { quadratic_min(lo, f_lo, d_lo, hi, f_hi) } else { None };
            alpha = safeguard(cand, lo, hi, T::lit(0.1), T::lit(0.9));
        }
        if hi - lo <= T::machine_eps() * T::lit(16.0) {
            break;
        }
    }
    LineSearchOutcome::Failed {
        best_alpha: if best.1.is_finite() { best.0 } else { params.alpha_min },
        best_phi: best.1,
        evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn slack_rule_examples() {
        assert_eq!(init_slacks(&v(&[-1.0, 2.0]), &v(&[0.0, 0.0]), 0.0), v(&[0.0, 2.0]));
        assert_eq!(init_slacks(&v(&[3.0]), &v(&[4.0]), 2.0), v(&[1.0]));
        assert_eq!(init_slacks(&v(&[1.0]), &v(&[5.0]), 1.0), v(&[0.0]));
    }

    #[test]
    fn slack_direction_vanishes_for_zero_step_at_s_equal_c() {
        let c = v(&[0.5, 1.0, 2.0]);
        let jx = nalgebra::DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let ju = nalgebra::DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let ds = slack_directions(&c, &jx, &ju, &v(&[0.0, 0.0]), &v(&[0.0]), &c);
        assert_eq!(ds, v(&[0.0, 0.0, 0.0]));
        let ds = slack_directions(&c, &jx, &ju, &v(&[1.0, 0.5]), &v(&[0.25]), &v(&[0.0, 0.0, 0.0]));
        assert_eq!(ds, v(&[1.0, 1.25, 1.75]));
    }

    #[test]
    fn penalty_unchanged_when_all_gaps_closed() {
        let c = vec![v(&[1.0]), v(&[2.0])];
        let rho = update_penalties(&[0.5, 0.0], 1.0, 0.0, &c, &c.clone(), &c.clone(), &c);
        assert_eq!(rho, vec![0.5, 0.0]);
    }

    #[test]
    fn single_violation_gets_enough_penalty() {
        let c = vec![v(&[-1.0, 0.5])];
        let s = vec![init_slacks(&c[0], &v(&[0.0, 0.0]), 0.0)];
        let y = vec![v(&[0.0, 0.0])];
        let y_hat = vec![v(&[3.0, 0.0])];
        let (g_dot, delta) = (-0.2, 1.0);
        assert!(merit_directional_derivative(g_dot, &c, &y, &y_hat, &s, &[0.0]) > -0.5);
        let rho = update_penalties(&[0.0], g_dot, delta, &c, &y, &y_hat, &s);
        assert!(rho[0] > 0.0);
        let d = merit_directional_derivative(g_dot, &c, &y, &y_hat, &s, &rho);
        assert!(d <= -0.5 * delta + 1e-12);
    }

    #[test]
    fn full_step_on_mild_quadratic() {
        let f = |a: f64| 1.0 - a + 0.1 * a * a;
        match line_search(f, 1.0, -1.0, &LineSearchParams::default()) {
            LineSearchOutcome::Accepted { alpha, .. } => assert_eq!(alpha, 1.0),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn steep_curvature_gives_interior_step() {
        let (sig, eta) = (0.4, 0.49);
        let f = |a: f64| 1.0 - a + 20.0 * a * a;
        match line_search(f, 1.0, -1.0, &LineSearchParams::default()) {
            LineSearchOutcome::Accepted { alpha, phi, .. } => {
                assert!(alpha < 1.0);
                assert!(phi <= 1.0 - sig * alpha);
                assert!((-1.0 + 40.0 * alpha).abs() <= eta + 1e-6);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn increasing_merit_fails() {
        let f = |a: f64| 1.0 + a;
        assert!(matches!(
            line_search(f, 1.0, -1.0, &LineSearchParams::default()),
            LineSearchOutcome::Failed { .. }
        ));
    }

    #[test]
    fn non_finite_candidates_are_backtracked() {
        let f = |a: f64| if a > 0.3 { f64::INFINITY } else { 1.0 - a + a * a };
        match line_search(f, 1.0, -1.0, &LineSearchParams::default()) {
            LineSearchOutcome::Accepted { alpha, .. } => assert!(alpha <= 0.3),
            o => panic!("{o:?}"),
        }
    }

    proptest! {
        #[test]
        fn penalty_contract(
            gaps in proptest::collection::vec(-2.0f64..2.0, 6),
            ys in proptest::collection::vec(0.0f64..3.0, 6),
            yh in proptest::collection::vec(0.0f64..3.0, 6),
            g_dot in -3.0f64..0.0,
            delta in 0.0f64..3.0,
            rho0 in 0.0f64..1.0,
        ) {
            let c: Vec<_> = gaps.chunks(2).map(v).collect();
            let y: Vec<_> = ys.chunks(2).map(v).collect();
            let y_hat: Vec<_> = yh.chunks(2).map(v).collect();
            let s: Vec<_> = c.iter().zip(&y).map(|(c, y)| init_slacks(c, y, rho0)).collect();
            let rho = vec![rho0; 3];
            let up = update_penalties(&rho, g_dot, delta, &c, &y, &y_hat, &s);
            prop_assert!(up.iter().zip(&rho).all(|(a, b)| a >= b));
            let d = merit_directional_derivative(g_dot, &c, &y, &y_hat, &s, &up);
            prop_assert!(d <= -0.5 * delta + 1e-8);
        }

        #[test]
        fn accepted_steps_satisfy_decrease(c2 in 0.01f64..50.0, c3 in -1.0f64..1.0) {
            let f = |a: f64| 2.0 - 1.5 * a + c2 * a * a + c3 * a * a * a;
            let p = LineSearchParams::default();
            if let LineSearchOutcome::Accepted { alpha, phi, .. } = line_search(f, 2.0, -1.5, &p) {
                prop_assert!(phi - 2.0 <= p.sigma * alpha * -1.5);
                prop_assert!(alpha >= p.alpha_min && alpha <= 1.0);
            }
        }
    }
}
