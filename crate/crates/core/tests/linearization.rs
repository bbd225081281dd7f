mod common;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajsqp::linearize::{build_qp_data, LinearizeOptions};
use trajsqp::oracle::{fd_jacobian, FdConfig};
use trajsqp::problem::{evaluate_objective, rollout_open_loop};
use trajsqp::qp::{QpOptions, QpStatus};
use trajsqp::{HessianMode, Iterate};

use common::{car_problem, normal};

#[test]
fn reduced_gradient_is_the_derivative_of_the_rolled_out_cost() {
    let spec = car_problem([-1.5, -1.75, 0.0, 0.0]);
    let (nh, m) = (spec.horizon(), spec.control_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let u: Vec<DVector<f64>> = (0..nh).map(|_| DVector::from_fn(m, |_, _| 0.3 * normal(&mut rng))).collect();
        let it = Iterate::cold_start(&spec, u.clone()).unwrap();
        let data = build_qp_data(&spec, &it, &LinearizeOptions::new(HessianMode::Full)).unwrap();
        let flat = DVector::from_fn(nh * m, |i, _| u[i / m][i % m]);
        let cost = |v: &DVector<f64>| {
            let us: Vec<DVector<f64>> = (0..nh).map(|k| v.rows(k * m, m).into_owned()).collect();
            let x = rollout_open_loop(&spec, &us).ok()?;
            Some(DVector::from_element(1, evaluate_objective(&spec, &x, &us).ok()?))
        };
        let fd = fd_jacobian(cost, &flat, &FdConfig::default()).unwrap();
        for k in 0..nh {
            for j in 0..m {
                let (g, f) = (data.hamiltonian_grad[k][j], fd[(0, k * m + j)]);
                assert!((g - f).abs() <= 1e-6 * (1.0 + f.abs()), "k={k} j={j}: {g} vs {f}");
            }
        }
    }
}

#[test]
fn hessian_modes_coincide_for_linear_dynamics() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let lq = common::random_lq(&mut rng, 3, 2, 10, None);
    let u = vec![DVector::from_vec(vec![0.4, -0.2]); 10];
    let it = Iterate::cold_start(&lq.problem, u).unwrap();
    let full = build_qp_data(&lq.problem, &it, &LinearizeOptions::new(HessianMode::Full)).unwrap();
    let gn = build_qp_data(&lq.problem, &it, &LinearizeOptions::new(HessianMode::GaussNewton)).unwrap();
    for (a, b) in full.stages.iter().zip(&gn.stages) {
        assert!((&a.hessian - &b.hessian).amax() < 1e-12);
    }
}

#[test]
fn linearized_dynamics_match_finite_differences_along_the_rollout() {
    let spec = car_problem([0.3, 1.0, 0.0, 0.0]);
    let u: Vec<DVector<f64>> = (0..spec.horizon()).map(|k| DVector::from_vec(vec![0.2 * (k as f64 * 0.3).sin(), 1.0])).collect();
    let it = Iterate::cold_start(&spec, u).unwrap();
    let data = build_qp_data(&spec, &it, &LinearizeOptions::new(HessianMode::Full)).unwrap();
    let dynamics = spec.dynamics();
    for k in [0, 7, 23, 39] {
        let (x, uk) = (&it.x[k], &it.u[k]);
        let fa = fd_jacobian(|p| Some(dynamics.step(k, p, uk)), x, &FdConfig::default()).unwrap();
        let fb = fd_jacobian(|p| Some(dynamics.step(k, x, p)), uk, &FdConfig::default()).unwrap();
        let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).norm() / b.norm().max(1.0);
        assert!(rel(&data.stages[k].a, &fa) < 1e-8);
        assert!(rel(&data.stages[k].b, &fb) < 1e-8);
    }
}

#[test]
fn structured_and_dense_backends_agree_on_the_car_subproblem() {
    let spec = car_problem([-1.5, -1.75, 0.0, 0.0]);
    let u = vec![DVector::from_vec(vec![0.1, 0.5]); spec.horizon()];
    let it = Iterate::cold_start(&spec, u).unwrap();
    let qp = build_qp_data(&spec, &it, &LinearizeOptions::new(HessianMode::Full)).unwrap().full_qp();
    let riccati = qp.solve(&QpOptions::with_tol(1e-10)).unwrap();
    let dense = qp.solve_dense(&QpOptions::with_tol(1e-10)).unwrap();
    assert_eq!(riccati.status, QpStatus::Optimal);
    assert_eq!(dense.status, QpStatus::Optimal);
    assert!((riccati.objective - dense.objective).abs() <= 1e-7 * (1.0 + dense.objective.abs()));
    for (a, b) in riccati.u.iter().zip(&dense.u) {
        assert!((a - b).amax() < 1e-5, "{a} vs {b}");
    }
}
