#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use trajsqp::models::{CarDynamics, ConstraintStack, ConstraintTerm, Disc, LinearDynamics, PointMap, QuadraticObjective, Where};
use trajsqp::Problem;

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0
}

/// Time-varying LQ problem with random dynamics and weights, optionally
/// with control bounds of half-width `u_box`.
pub struct Lq {
    pub problem: Problem,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub hess: Vec<DMatrix<f64>>,
    pub qn: DMatrix<f64>,
}

pub fn random_lq<R: Rng>(rng: &mut R, n: usize, m: usize, horizon: usize, u_box: Option<f64>) -> Lq {
    let a: Vec<_> = (0..horizon)
        .map(|_| DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| 0.1 * normal(rng)))
        .collect();
    let b: Vec<_> = (0..horizon).map(|_| DMatrix::from_fn(n, m, |_, _| 0.5 * normal(rng))).collect();
    let mut spd = |d: usize| {
        let l = DMatrix::from_fn(d, d, |_, _| 0.5 * normal(rng));
        &l * l.transpose() + DMatrix::identity(d, d) * 0.1
    };
    let q: Vec<_> = (0..horizon).map(|_| spd(n)).collect();
    let r: Vec<_> = (0..horizon).map(|_| spd(m)).collect();
    let qn = spd(n);
    let x0 = DVector::from_fn(n, |_, _| normal(rng));
    let goal = DVector::from_fn(n, |_, _| normal(rng));
    let objective =
        QuadraticObjective::new(q.clone(), r.clone(), DVector::zeros(n), DVector::zeros(m), qn.clone(), goal).unwrap();
    let bound = u_box.unwrap_or(f64::INFINITY);
    let problem = Problem::new(
        horizon,
        x0,
        Arc::new(LinearDynamics::new(a.clone(), b.clone()).unwrap()),
        Arc::new(objective),
        None,
        DVector::from_element(m, -bound),
        DVector::from_element(m, bound),
    )
    .unwrap();
    let hess = (0..horizon)
        .map(|k| {
            let mut h = DMatrix::zeros(n + m, n + m);
            h.view_mut((0, 0), (n, n)).copy_from(&q[k]);
            h.view_mut((n, n), (m, m)).copy_from(&r[k]);
            h
        })
        .collect();
    Lq { problem, a, b, hess, qn }
}

/// Kinematic car driving to the origin past one disc obstacle.
pub fn car_problem(x0: [f64; 4]) -> Problem {
    let r = DMatrix::from_diagonal(&DVector::from_vec(vec![0.02, 0.02]));
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![20.0, 20.0, 2.0, 2.0]));
    let objective = QuadraticObjective::effort_and_goal(r, q, DVector::zeros(4)).unwrap();
    let obstacle = Disc { point: PointMap::Coordinates { ix: 0, iy: 1 }, center: Vector2::new(-0.8, -0.9), radius: 0.4 };
    let constraints = ConstraintStack::new().with(ConstraintTerm::Disc(obstacle), Where::All);
    let (lo, hi) = CarDynamics::control_bounds();
    Problem::new(
        40,
        DVector::from_row_slice(&x0),
        Arc::new(CarDynamics { dt: 0.05 }),
        Arc::new(objective),
        Some(Arc::new(constraints)),
        lo,
        hi,
    )
    .unwrap()
}
