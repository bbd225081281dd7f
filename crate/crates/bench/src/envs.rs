//! Problem builders and initial control guesses for the benchmark
//! environments.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};
use trajsqp::models::chart::angular_residual;
use trajsqp::models::{
    AcrobotDynamics, AcrobotObjective, AcrobotParams, CarDynamics, ConstraintStack, ConstraintTerm, Disc, PointMap,
    QuadPendDynamics, QuadPendObjective, QuadPendParams, QuadraticObjective, Where,
};
use trajsqp::rollout::riccati_gains;
use trajsqp::{Dynamics, Objective, Problem, Result};

use crate::config::{AcrobotConfig, BenchConfig, CarConfig, Circle, QuadpendConfig};

/// A problem together with its initial control sequence.
#[derive(Debug, Clone)]
pub struct Environment {
    pub problem: Problem,
    pub u_init: Vec<DVector<f64>>,
}

pub fn build(cfg: &BenchConfig) -> Result<Environment> {
    match (&cfg.car, &cfg.acrobot, &cfg.quadpend) {
        (Some(c), _, _) => build_car(c),
        (_, Some(c), _) => build_acrobot(c),
        (_, _, Some(c)) => build_quadpend(c),
        _ => unreachable!("resolved configs carry their environment section"),
    }
}

fn disc(point: PointMap<f64>, o: &Circle, inflate: f64) -> ConstraintTerm<f64> {
    ConstraintTerm::Disc(Disc {
        point,
        center: Vector2::new(o.center[0], o.center[1]),
        radius: o.radius + inflate,
    })
}

pub fn build_car(c: &CarConfig) -> Result<Environment> {
    let dynamics = CarDynamics { dt: c.dt };
    // scale the published weights onto the ½-quadratic convention
    let r = DMatrix::from_diagonal(&DVector::from_iterator(2, c.r.iter().map(|w| 2.0 * c.stage_scale * w)));
    let q = DMatrix::from_diagonal(&DVector::from_iterator(4, c.q_terminal.iter().map(|w| 2.0 * w)));
    let objective = QuadraticObjective::effort_and_goal(r, q, DVector::from_row_slice(&c.goal))?;
    let mut constraints = ConstraintStack::new();
    for o in &c.obstacles {
        constraints.push(disc(PointMap::Coordinates { ix: 0, iy: 1 }, o, 0.0), Where::All);
    }
    let (lo, hi) = CarDynamics::control_bounds();
    let x0 = DVector::from_row_slice(&c.x0.unwrap_or_else(|| CarConfig::case_x0(1)));
    let problem = Problem::new(c.horizon, x0, Arc::new(dynamics), Arc::new(objective), Some(Arc::new(constraints)), lo, hi)?;
    Ok(Environment { u_init: vec![DVector::zeros(2); c.horizon], problem })
}

pub fn build_acrobot(c: &AcrobotConfig) -> Result<Environment> {
    let l = c.links;
    let params = AcrobotParams { m1: l.m1, m2: l.m2, l1: l.l1, lc1: l.lc1, lc2: l.lc2, i1: l.i1, i2: l.i2, g: l.g };
    let dynamics = AcrobotDynamics { params, dt: c.dt };
    let goal = DVector::from_row_slice(&c.goal);
    let objective = AcrobotObjective { weights: (c.weights[0], c.weights[1], c.weights[2]), goal: goal.clone() };
    let constraints = ConstraintStack::new()
        .with(ConstraintTerm::AngleWindow { index: 0, slot: 0 }, Where::All)
        .with(ConstraintTerm::AngleWindow { index: 1, slot: 1 }, Where::All)
        .with(ConstraintTerm::Ball { center: goal.clone(), radius: c.terminal_radius, angles: vec![0, 1] }, Where::Terminal);
    let (lo, hi) = AcrobotDynamics::control_bounds();
    let x0 = DVector::from_row_slice(&c.x0.unwrap_or([0.0; 4]));
    let u_init = acrobot_guess(&dynamics, &objective, &x0, &goal, c.horizon, &lo, &hi)?;
    let problem = Problem::new(c.horizon, x0, Arc::new(dynamics), Arc::new(objective), Some(Arc::new(constraints)), lo, hi)?;
    Ok(Environment { problem, u_init })
}

/// Tracks the straight-line state interpolation from `x0` to the goal with
/// TV-LQR gains (objective Hessian, dynamics linearized along the line with
/// zero controls) and records the clipped controls. Tracking errors in the
/// joint angles are taken on the circle.
fn acrobot_guess(
    dynamics: &AcrobotDynamics<f64>,
    objective: &AcrobotObjective<f64>,
    x0: &DVector<f64>,
    goal: &DVector<f64>,
    horizon: usize,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    let chi: Vec<DVector<f64>> = (0..=horizon)
        .map(|k| x0 + (goal - x0) * (k as f64 / horizon as f64))
        .collect();
    let mu = DVector::zeros(1);
    let (mut a, mut b, mut hess) = (Vec::new(), Vec::new(), Vec::new());
    for (k, xk) in chi.iter().take(horizon).enumerate() {
        let (ak, bk) = dynamics.jacobians(k, xk, &mu);
        a.push(ak);
        b.push(bk);
        hess.push(objective.stage_expansion(k, xk, &mu).1);
    }
    let (_, hn) = objective.terminal_expansion(&chi[horizon]);
    let gains = riccati_gains(&a, &b, &hess, &hn, 1e-6)?;
    let mut x = x0.clone();
    let mut u = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let target = &mu + &gains[k] * angular_residual(&x, &chi[k], &[0, 1]);
        let uk = target.zip_zip_map(lo, hi, |v, l, h| v.clamp(l, h));
        x = dynamics.step(k, &x, &uk);
        u.push(uk);
    }
    Ok(u)
}

pub fn build_quadpend(c: &QuadpendConfig) -> Result<Environment> {
    let params = QuadPendParams::<f64>::default();
    let dynamics = QuadPendDynamics { params, dt: c.dt };
    let mut objective = QuadPendObjective::new(&params);
    objective.weights = (c.weights[0], c.weights[1], c.weights[2]);
    objective.goal = DVector::from_iterator(8, c.goal.iter().copied().chain([0.0; 4]));
    objective.q_terminal = DMatrix::from_diagonal(&DVector::from_row_slice(&c.q_terminal));
    let mut constraints = ConstraintStack::new();
    for o in &c.obstacles {
        constraints.push(disc(PointMap::Coordinates { ix: 0, iy: 1 }, o, c.body_radius), Where::All);
        for &f in &c.pole_points {
            let point = PointMap::Pendulum { ix: 0, iz: 1, iphi: 3, offset: f * params.pole };
            constraints.push(disc(point, o, 0.0), Where::All);
        }
    }
    constraints.push(ConstraintTerm::Bounds { index: 0, lower: c.px_bounds[0], upper: c.px_bounds[1] }, Where::All);
    constraints.push(ConstraintTerm::Bounds { index: 1, lower: c.pz_bounds[0], upper: c.pz_bounds[1] }, Where::All);
    constraints.push(ConstraintTerm::Bounds { index: 2, lower: -c.theta_limit, upper: c.theta_limit }, Where::All);
    let (lo, hi) = dynamics.control_bounds();
    let x0 = DVector::from_row_slice(&c.x0.unwrap_or_else(|| QuadpendConfig::case_x0(1)));
    let hover = params.hover_thrust();
    let problem = Problem::new(c.horizon, x0, Arc::new(dynamics), Arc::new(objective), Some(Arc::new(constraints)), lo, hi)?;
    Ok(Environment { u_init: vec![DVector::from_element(2, hover); c.horizon], problem })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EnvName;
    use trajsqp::problem::{evaluate_constraints, rollout_open_loop};
    use trajsqp::Method;

    fn env(name: EnvName, case: usize) -> Environment {
        build(&BenchConfig::new(name, case, Method::OpenLoop).unwrap()).unwrap()
    }

    #[test]
    fn car_guess_is_zero() {
        let e = env(EnvName::Car, 1);
        assert_eq!(e.u_init.len(), 40);
        assert!(e.u_init.iter().all(|u| u.amax() == 0.0));
    }

    #[test]
    fn quadpend_guess_is_hover() {
        let e = env(EnvName::Quadpend, 1);
        let p = QuadPendParams::<f64>::default();
        let uh = 0.5 * (p.mq + p.mp) * p.g;
        assert_eq!(e.u_init.len(), 160);
        assert!(e.u_init.iter().all(|u| u.iter().all(|v| *v == uh)));
    }

    #[test]
    fn acrobot_guess_respects_bounds() {
        let e = env(EnvName::Acrobot, 1);
        assert_eq!(e.u_init.len(), 150);
        assert!(e.u_init.iter().all(|u| u[0].abs() <= 2.0));
        assert!(e.u_init.iter().any(|u| u[0].abs() > 1e-3));
    }

    #[test]
    fn every_case_starts_feasible() {
        for (name, case) in [(EnvName::Car, 1), (EnvName::Car, 2), (EnvName::Car, 3), (EnvName::Quadpend, 1), (EnvName::Quadpend, 2)] {
            let e = env(name, case);
            let p = &e.problem;
            let c0 = p.state_constraint_values(0, p.x0());
            assert!(c0.iter().all(|v| *v > 0.0), "{name:?} {case}: {c0}");
            let x = rollout_open_loop(p, &e.u_init).unwrap();
            assert!(evaluate_constraints(p, &x, &e.u_init).is_ok());
        }
    }

    #[test]
    fn car_clearance_equals_distance_minus_radius() {
        let mut cfg = BenchConfig::new(EnvName::Car, 1, Method::OpenLoop).unwrap();
        let car = cfg.car.as_mut().unwrap();
        car.obstacles = vec![Circle { center: [1.0, 2.0], radius: 0.5 }];
        car.x0 = Some([4.0, 6.0, 0.0, 0.0]);
        let e = build(&cfg).unwrap();
        let c = e.problem.state_constraint_values(0, e.problem.x0());
        assert!((c[0] - 4.5).abs() < 1e-12);
    }
}
