//! Optimal control problem definition, shooting rollouts, constraint
//! evaluation and KKT residuals.
//!
//! Constraint layout is fixed across the crate: at every step `k < N` the
//! stacked constraint vector is `c_k = (c_k^x(x_k), c_k^u(u_k))`, state rows
//! first. At the terminal step only the state rows exist. Every constraint is
//! feasible when nonnegative.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Discrete-time dynamics `x_{k+1} = f(x_k, u_k)` with analytic derivatives.
pub trait Dynamics<T: Real>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn dt(&self) -> T;

    /// `f_k(x, u)`. Most models are time invariant and ignore `k`.
    fn step(&self, k: usize, x: &DVector<T>, u: &DVector<T>) -> DVector<T>;

    /// Returns `(A, B) = (∂f/∂x, ∂f/∂u)`.
    fn jacobians(&self, k: usize, x: &DVector<T>, u: &DVector<T>) -> (DMatrix<T>, DMatrix<T>);

    /// Hessian of `w · f(x, u)` with respect to the stacked `(x, u)`.
    ///
    /// The default differentiates [`Dynamics::jacobians`] by central
    /// differences.
    fn weighted_hessian(&self, k: usize, x: &DVector<T>, u: &DVector<T>, w: &DVector<T>) -> DMatrix<T> {
        fd_weighted_hessian(self, k, x, u, w)
    }

    /// Indices of state components that live on the circle.
    fn angular_dims(&self) -> &[usize] {
        &[]
    }
}

/// Central-difference Hessian of `w · f` built from the analytic Jacobians.
pub fn fd_weighted_hessian<T: Real, D: Dynamics<T> + ?Sized>(
    dynamics: &D,
    k: usize,
    x: &DVector<T>,
    u: &DVector<T>,
    w: &DVector<T>,
) -> DMatrix<T> {
    let n = x.len();
    let m = u.len();
    let mut hess = DMatrix::zeros(n + m, n + m);
    let base = T::machine_eps().powf(T::lit(1.0 / 3.0));
    let two = T::lit(2.0);
    for i in 0..n + m {
        let (mut xp, mut up) = (x.clone(), u.clone());
        let (mut xm, mut um) = (x.clone(), u.clone());
        let h = if i < n {
            let h = base * (T::one() + x[i].abs());
            xp[i] += h;
            xm[i] -= h;
            h
        } else {
            let h = base * (T::one() + u[i - n].abs());
            up[i - n] += h;
            um[i - n] -= h;
            h
        };
        let (ap, bp) = dynamics.jacobians(k, &xp, &up);
        let (am, bm) = dynamics.jacobians(k, &xm, &um);
        let ga = (ap - am).transpose() * w;
        let gb = (bp - bm).transpose() * w;
        for r in 0..n {
            hess[(r, i)] = ga[r] / (two * h);
        }
        for r in 0..m {
            hess[(n + r, i)] = gb[r] / (two * h);
        }
    }
    (&hess + hess.transpose()) * T::lit(0.5)
}

/// Running and terminal costs with first and second derivatives.
///
/// Expansions are taken with respect to the stacked vector `(x, u)` for
/// stage costs and `x` for the terminal cost.
pub trait Objective<T: Real>: Send + Sync {
    fn stage_cost(&self, k: usize, x: &DVector<T>, u: &DVector<T>) -> T;
    fn stage_expansion(&self, k: usize, x: &DVector<T>, u: &DVector<T>) -> (DVector<T>, DMatrix<T>);
    fn terminal_cost(&self, x: &DVector<T>) -> T;
    fn terminal_expansion(&self, x: &DVector<T>) -> (DVector<T>, DMatrix<T>);
}

/// State constraints `c_k^x(x) >= 0`.
///
/// `chart` carries the per-step window shift of the angular components
/// (empty when the model declares none); implementations that do not bound
/// angles ignore it.
pub trait StateConstraints<T: Real>: Send + Sync {
    fn dim(&self, k: usize, terminal: bool) -> usize;
    fn eval(&self, k: usize, terminal: bool, x: &DVector<T>, chart: &[T]) -> DVector<T>;
    fn jacobian(&self, k: usize, terminal: bool, x: &DVector<T>, chart: &[T]) -> DMatrix<T>;
    /// `Σ_i w_i ∇²c_i(x)`.
    fn weighted_hessian(
        &self,
        k: usize,
        terminal: bool,
        x: &DVector<T>,
        w: &DVector<T>,
        chart: &[T],
    ) -> DMatrix<T>;
}

/// A validated trajectory optimization problem.
///
/// Cheap to clone: models and costs are shared behind `Arc`s. The only
/// per-iteration data is the chart shift schedule, replaced wholesale through
/// [`ProblemSpec::with_chart_shifts`].
#[derive(Clone)]
pub struct ProblemSpec<T: Real> {
    horizon: usize,
    x0: DVector<T>,
    dynamics: Arc<dyn Dynamics<T>>,
    objective: Arc<dyn Objective<T>>,
    state_constraints: Option<Arc<dyn StateConstraints<T>>>,
    control_lower: DVector<T>,
    control_upper: DVector<T>,
    chart_shifts: Vec<DVector<T>>,
    lower_rows: Vec<usize>,
    upper_rows: Vec<usize>,
}

impl<T: Real> std::fmt::Debug for ProblemSpec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("horizon", &self.horizon)
            .field("n", &self.state_dim())
            .field("m", &self.control_dim())
            .field("x0", &self.x0.as_slice())
            .finish_non_exhaustive()
    }
}

impl<T: Real> ProblemSpec<T> {
    /// Builds and validates a problem. Infinite control bounds are allowed and
    /// simply contribute no constraint row.
    pub fn new(
        horizon: usize,
        x0: DVector<T>,
        dynamics: Arc<dyn Dynamics<T>>,
        objective: Arc<dyn Objective<T>>,
        state_constraints: Option<Arc<dyn StateConstraints<T>>>,
        control_lower: DVector<T>,
        control_upper: DVector<T>,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidProblem("horizon must be at least 1".into()));
        }
        let n = dynamics.state_dim();
        let m = dynamics.control_dim();
        if x0.len() != n {
            return Err(Error::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
        }
        if control_lower.len() != m || control_upper.len() != m {
            return Err(Error::Dimension("control bounds must have one entry per control".into()));
        }
        for i in 0..m {
            if !(control_lower[i] < control_upper[i]) {
                return Err(Error::InvalidProblem(format!(
                    "control bound {i}: lower must be strictly below upper"
                )));
            }
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("x0 is not finite".into()));
        }
        let lower_rows = (0..m).filter(|&i| control_lower[i].is_finite()).collect();
        let upper_rows = (0..m).filter(|&i| control_upper[i].is_finite()).collect();
        let n_ang = dynamics.angular_dims().len();
        Ok(Self {
            horizon,
            x0,
            dynamics,
            objective,
            state_constraints,
            control_lower,
            control_upper,
            chart_shifts: vec![DVector::zeros(n_ang); horizon + 1],
            lower_rows,
            upper_rows,
        })
    }

    /// Returns a copy using the given per-step angular window shifts.
    pub fn with_chart_shifts(&self, shifts: Vec<DVector<T>>) -> Result<Self> {
        let n_ang = self.dynamics.angular_dims().len();
        if shifts.len() != self.horizon + 1 || shifts.iter().any(|s| s.len() != n_ang) {
            return Err(Error::Dimension("chart shifts must be (N+1) × angular dims".into()));
        }
        let mut out = self.clone();
        out.chart_shifts = shifts;
        Ok(out)
    }

    /// Returns a copy starting from a different initial state.
    pub fn with_initial_state(&self, x0: DVector<T>) -> Result<Self> {
        if x0.len() != self.state_dim() {
            return Err(Error::Dimension("x0 length".into()));
        }
        let mut out = self.clone();
        out.x0 = x0;
        Ok(out)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn x0(&self) -> &DVector<T> {
        &self.x0
    }
    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }
    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }
    pub fn dynamics(&self) -> &dyn Dynamics<T> {
        self.dynamics.as_ref()
    }
    pub fn objective(&self) -> &dyn Objective<T> {
        self.objective.as_ref()
    }
    pub fn state_constraints(&self) -> Option<&dyn StateConstraints<T>> {
        self.state_constraints.as_deref()
    }
    pub fn control_lower(&self) -> &DVector<T> {
        &self.control_lower
    }
    pub fn control_upper(&self) -> &DVector<T> {
        &self.control_upper
    }
    pub fn chart_shifts(&self) -> &[DVector<T>] {
        &self.chart_shifts
    }

    /// Number of state-constraint rows at step `k` (`k == N` is terminal).
    pub fn state_rows(&self, k: usize) -> usize {
        self.state_constraints
            .as_ref()
            .map_or(0, |c| c.dim(k, k == self.horizon))
    }

    /// Number of control-constraint rows (finite box bounds).
    pub fn control_rows(&self) -> usize {
        self.lower_rows.len() + self.upper_rows.len()
    }

    /// Length of the stacked constraint vector `c_k`.
    pub fn stacked_rows(&self, k: usize) -> usize {
        if k == self.horizon {
            self.state_rows(k)
        } else {
            self.state_rows(k) + self.control_rows()
        }
    }

    /// `c^u(u)`: rows `u_i - lower_i` for finite lower bounds followed by
    /// `upper_i - u_i` for finite upper bounds.
    pub fn control_constraints(&self, u: &DVector<T>) -> DVector<T> {
        let mut c = DVector::zeros(self.control_rows());
        let mut r = 0;
        for &i in &self.lower_rows {
            c[r] = u[i] - self.control_lower[i];
            r += 1;
        }
        for &i in &self.upper_rows {
            c[r] = self.control_upper[i] - u[i];
            r += 1;
        }
        c
    }

    /// Constant Jacobian of [`ProblemSpec::control_constraints`].
    pub fn control_jacobian(&self) -> DMatrix<T> {
        let mut j = DMatrix::zeros(self.control_rows(), self.control_dim());
        let mut r = 0;
        for &i in &self.lower_rows {
            j[(r, i)] = T::one();
            r += 1;
        }
        for &i in &self.upper_rows {
            j[(r, i)] = -T::one();
            r += 1;
        }
        j
    }

    pub fn state_constraint_values(&self, k: usize, x: &DVector<T>) -> DVector<T> {
        match &self.state_constraints {
            Some(c) => c.eval(k, k == self.horizon, x, self.chart_shifts[k].as_slice()),
            None => DVector::zeros(0),
        }
    }

    pub fn state_constraint_jacobian(&self, k: usize, x: &DVector<T>) -> DMatrix<T> {
        match &self.state_constraints {
            Some(c) => c.jacobian(k, k == self.horizon, x, self.chart_shifts[k].as_slice()),
            None => DMatrix::zeros(0, self.state_dim()),
        }
    }

    pub fn state_constraint_hessian(&self, k: usize, x: &DVector<T>, w: &DVector<T>) -> DMatrix<T> {
        match &self.state_constraints {
            Some(c) if w.len() > 0 => {
                c.weighted_hessian(k, k == self.horizon, x, w, self.chart_shifts[k].as_slice())
            }
            _ => DMatrix::zeros(self.state_dim(), self.state_dim()),
        }
    }

    /// Projects a control onto the box bounds.
    pub fn clip_control(&self, u: &DVector<T>) -> DVector<T> {
        DVector::from_fn(u.len(), |i, _| {
            u[i].clamp(self.control_lower[i], self.control_upper[i])
        })
    }

    fn check_controls(&self, u_seq: &[DVector<T>]) -> Result<()> {
        if u_seq.len() != self.horizon {
            return Err(Error::Dimension(format!(
                "control sequence has {} entries, horizon is {}",
                u_seq.len(),
                self.horizon
            )));
        }
        if let Some(k) = u_seq.iter().position(|u| u.len() != self.control_dim()) {
            return Err(Error::Dimension(format!("control {k} has wrong length")));
        }
        Ok(())
    }

    fn check_states(&self, x_seq: &[DVector<T>]) -> Result<()> {
        if x_seq.len() != self.horizon + 1 {
            return Err(Error::Dimension(format!(
                "state sequence has {} entries, expected {}",
                x_seq.len(),
                self.horizon + 1
            )));
        }
        if let Some(k) = x_seq.iter().position(|x| x.len() != self.state_dim()) {
            return Err(Error::Dimension(format!("state {k} has wrong length")));
        }
        Ok(())
    }
}

/// Primal-dual SQP iterate. `x` is always the open-loop (or accepted
/// closed-loop) rollout of `u` from `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate<T: Real> {
    pub u: Vec<DVector<T>>,
    pub x: Vec<DVector<T>>,
    pub y: Vec<DVector<T>>,
    pub s: Vec<DVector<T>>,
    pub rho: Vec<T>,
}

impl<T: Real> Iterate<T> {
    /// Cold start: rollout of `u`, zero duals, zero penalties.
    pub fn cold_start(spec: &ProblemSpec<T>, u: Vec<DVector<T>>) -> Result<Self> {
        let x = rollout_open_loop(spec, &u)?;
        let y: Vec<DVector<T>> = (0..=spec.horizon())
            .map(|k| DVector::zeros(spec.stacked_rows(k)))
            .collect();
        let c = evaluate_constraints(spec, &x, &u)?;
        let s = c.iter().map(|ck| ck.map(|v| v.max(T::zero()))).collect();
        Ok(Self {
            u,
            x,
            y,
            s,
            rho: vec![T::zero(); spec.horizon() + 1],
        })
    }

    /// Euclidean norm of the stacked control sequence.
    pub fn control_norm(&self) -> T {
        self.u.iter().map(|u| u.norm_squared()).fold(T::zero(), |a, b| a + b).sqrt()
    }

    /// Euclidean norm of the stacked dual vector.
    pub fn dual_norm(&self) -> T {
        self.y.iter().map(|y| y.norm_squared()).fold(T::zero(), |a, b| a + b).sqrt()
    }
}

/// The four KKT residuals monitored for termination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals<T> {
    /// `min_{k,i} c_{k,i}`.
    pub min_primal: T,
    /// `min_{k,i} y_{k,i}`.
    pub min_dual: T,
    /// `max_k ‖c_k ∘ y_k‖∞`.
    pub max_complementarity: T,
    /// `max_k ‖∇_{u_k} Ĥ_k‖∞`.
    pub max_stationarity: T,
}

/// Rolls the control sequence through the dynamics from `x0`.
///
/// Stops at the first non-finite state.
pub fn rollout_open_loop<T: Real>(spec: &ProblemSpec<T>, u_seq: &[DVector<T>]) -> Result<Vec<DVector<T>>> {
    spec.check_controls(u_seq)?;
    let mut x = Vec::with_capacity(spec.horizon() + 1);
    x.push(spec.x0().clone());
    for (k, u) in u_seq.iter().enumerate() {
        let next = spec.dynamics().step(k, &x[k], u);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedRollout { step: k + 1 });
        }
        x.push(next);
    }
    Ok(x)
}

/// `J(u, x) = Σ l_k(x_k, u_k) + l_N(x_N)`.
pub fn evaluate_objective<T: Real>(spec: &ProblemSpec<T>, x_seq: &[DVector<T>], u_seq: &[DVector<T>]) -> Result<T> {
    spec.check_controls(u_seq)?;
    spec.check_states(x_seq)?;
    let obj = spec.objective();
    let running = u_seq
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (k, u)| acc + obj.stage_cost(k, &x_seq[k], u));
    Ok(running + obj.terminal_cost(&x_seq[spec.horizon()]))
}

/// Stacked constraint values `c_k = (c_k^x, c_k^u)` for `k = 0..=N`.
pub fn evaluate_constraints<T: Real>(
    spec: &ProblemSpec<T>,
    x_seq: &[DVector<T>],
    u_seq: &[DVector<T>],
) -> Result<Vec<DVector<T>>> {
    spec.check_controls(u_seq)?;
    spec.check_states(x_seq)?;
    let n = spec.horizon();
    Ok((0..=n)
        .map(|k| {
            let cx = spec.state_constraint_values(k, &x_seq[k]);
            if k == n {
                cx
            } else {
                stack(&cx, &spec.control_constraints(&u_seq[k]))
            }
        })
        .collect())
}

/// Lagrangian `J − Σ y_kᵀ c_k` evaluated along a given trajectory.
pub fn evaluate_lagrangian<T: Real>(
    spec: &ProblemSpec<T>,
    x_seq: &[DVector<T>],
    u_seq: &[DVector<T>],
    y_seq: &[DVector<T>],
) -> Result<T> {
    let j = evaluate_objective(spec, x_seq, u_seq)?;
    let c = evaluate_constraints(spec, x_seq, u_seq)?;
    if y_seq.len() != c.len() || y_seq.iter().zip(&c).any(|(y, c)| y.len() != c.len()) {
        return Err(Error::Dimension("dual sequence does not match constraint layout".into()));
    }
    Ok(c.iter().zip(y_seq).fold(j, |acc, (c, y)| acc - y.dot(c)))
}

/// KKT residuals at the iterate, with Hamiltonian gradients taken through the
/// adjoint recursion.
pub fn kkt_residuals<T: Real>(spec: &ProblemSpec<T>, iterate: &Iterate<T>) -> Result<KktResiduals<T>> {
    let data = crate::linearize::build_qp_data(spec, iterate, &crate::linearize::LinearizeOptions::first_order())?;
    let c = evaluate_constraints(spec, &iterate.x, &iterate.u)?;
    Ok(crate::linearize::residuals_from(&data, &c, &iterate.y))
}

pub(crate) fn stack<T: Real>(a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}
