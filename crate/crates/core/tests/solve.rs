mod common;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajsqp::linearize::{build_qp_data, LinearizeOptions};
use trajsqp::qp::QpOptions;
use trajsqp::rollout::riccati_gains;
use trajsqp::sqp::first_iteration_gains;
use trajsqp::{sqp_solve, HessianMode, Iterate, Method, SolverOptions};

use std::sync::Arc;

use nalgebra::DMatrix;
use trajsqp::models::{LinearDynamics, QuadraticObjective};
use trajsqp::problem::ProblemSpec;
use trajsqp::sqp::SolverOptions as Options;
use trajsqp::Real;

use common::{car_problem, random_lq};

const METHODS: [Method; 3] = [Method::OpenLoop, Method::ClosedLoop, Method::ClosedLoopGamma];

#[test]
fn unconstrained_lq_is_solved_in_one_step_by_every_method() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let lq = random_lq(&mut rng, 4, 2, 20, None);
    let u0 = vec![DVector::zeros(2); 20];
    let it = Iterate::cold_start(&lq.problem, u0.clone()).unwrap();
    let data = build_qp_data(&lq.problem, &it, &LinearizeOptions::new(HessianMode::Full)).unwrap();
    let optimum = data.full_qp().solve_dense(&QpOptions::with_tol(1e-12)).unwrap();
    for method in METHODS {
        let opts = SolverOptions { method, ..SolverOptions::default() };
        let report = sqp_solve(&lq.problem, u0.clone(), &opts).unwrap();
        assert!(report.converged, "{method:?}");
        assert!(report.iteration_count() <= 2, "{method:?}: {}", report.iteration_count());
        for (a, b) in report.final_iterate.u.iter().zip(&optimum.u) {
            assert!((a - b).amax() < 1e-6, "{method:?}");
        }
    }
}

#[test]
fn closed_loop_gains_reduce_to_riccati_without_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let lq = random_lq(&mut rng, 4, 2, 20, None);
    let reference = riccati_gains(&lq.a, &lq.b, &lq.hess, &lq.qn, 0.0).unwrap();
    for method in [Method::ClosedLoop, Method::ClosedLoopGamma] {
        let opts = SolverOptions { method, ..SolverOptions::default() };
        let (gains, _, _) = first_iteration_gains(&lq.problem, vec![DVector::zeros(2); 20], &opts).unwrap();
        for (a, b) in gains.gains.iter().zip(&reference) {
            assert!((a - b).norm() <= 1e-8 * b.norm().max(1.0));
        }
    }
}

#[test]
fn box_constrained_lq_converges_to_the_qp_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let lq = random_lq(&mut rng, 3, 2, 15, Some(0.4));
    let u0 = vec![DVector::zeros(2); 15];
    let it = Iterate::cold_start(&lq.problem, u0.clone()).unwrap();
    let data = build_qp_data(&lq.problem, &it, &LinearizeOptions::new(HessianMode::Full)).unwrap();
    let optimum = data.full_qp().solve_dense(&QpOptions::with_tol(1e-12)).unwrap();
    assert!(optimum.u.iter().any(|u| u.amax() > 0.4 - 1e-6), "bounds should bind");
    for method in METHODS {
        let opts = SolverOptions { method, ..SolverOptions::default() };
        let report = sqp_solve(&lq.problem, u0.clone(), &opts).unwrap();
        assert!(report.converged, "{method:?}");
        for (a, b) in report.final_iterate.u.iter().zip(&optimum.u) {
            assert!((a - b).amax() < 1e-4, "{method:?}: {a} vs {b}");
        }
    }
}

#[test]
fn car_reaches_the_goal_around_the_obstacle() {
    let spec = car_problem([-1.5, -1.75, 0.0, 0.0]);
    let opts = SolverOptions { method: Method::ClosedLoopGamma, ..SolverOptions::default() };
    let report = sqp_solve(&spec, vec![DVector::zeros(2); 40], &opts).unwrap();
    assert!(report.converged, "stall {:?}", report.stall);
    assert!(report.final_violation >= -1e-3);
    let xn = &report.final_iterate.x[40];
    assert!(xn.rows(0, 2).norm() < 0.2, "final position {xn}");
}

fn double_integrator<T: Real>() -> ProblemSpec<T> {
    let (n, m, nh) = (2, 1, 10);
    let l = T::lit;
    let a = vec![DMatrix::from_row_slice(2, 2, &[l(1.0), l(0.1), l(0.0), l(1.0)]); nh];
    let b = vec![DMatrix::from_row_slice(2, 1, &[l(0.005), l(0.1)]); nh];
    let objective = QuadraticObjective::new(
        vec![DMatrix::identity(n, n); nh],
        vec![DMatrix::identity(m, m) * l(0.1); nh],
        DVector::zeros(n),
        DVector::zeros(m),
        DMatrix::identity(n, n) * l(10.0),
        DVector::zeros(n),
    )
    .unwrap();
    ProblemSpec::new(
        nh,
        DVector::from_vec(vec![l(1.0), l(0.0)]),
        Arc::new(LinearDynamics::new(a, b).unwrap()),
        Arc::new(objective),
        None,
        DVector::from_element(1, l(-2.0)),
        DVector::from_element(1, l(2.0)),
    )
    .unwrap()
}

#[test]
fn single_and_double_precision_agree() {
    let single = sqp_solve(&double_integrator::<f32>(), vec![DVector::zeros(1); 10], &Options::<f32>::default()).unwrap();
    let double = sqp_solve(&double_integrator::<f64>(), vec![DVector::zeros(1); 10], &Options::<f64>::default()).unwrap();
    assert!(single.converged && double.converged);
    for (a, b) in single.final_iterate.u.iter().zip(&double.final_iterate.u) {
        assert!((f64::from(a[0]) - b[0]).abs() < 1e-3, "{} vs {}", a[0], b[0]);
    }
}
