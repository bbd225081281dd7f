use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajsqp::barrier::{barrier_gains, solve_barrier, BarrierOptions};
use trajsqp::exact::backward_pass_exact;
use trajsqp::oracle::{fd_jacobian, fd_policy_jacobian, random_box_lq, sample_critical_region, tail_policy, FdConfig};
use trajsqp::qp::{QpOptions, QpStatus};
use trajsqp::QpData;

fn solved(seed: u64) -> Option<(QpData, Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=4);
    let m = rng.random_range(1..=2);
    let nh = rng.random_range(4..=7);
    let data: QpData = random_box_lq(&mut rng, n, m, nh, 0.3, 0.6);
    let sol = data.full_qp().solve_dense(&QpOptions::with_tol(1e-12)).ok()?;
    (sol.status == QpStatus::Optimal).then_some((data, sol.x, sol.u))
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

#[test]
fn exact_gains_match_finite_differences_of_the_tail_problem() {
    let mut checked = 0;
    for seed in 0..30 {
        let Some((data, dx, du)) = solved(seed) else { continue };
        let Ok(pass) = backward_pass_exact(&data, &dx, &du) else { continue };
        if !pass.all_strictly_complementary() {
            continue;
        }
        for k in 0..data.horizon() {
            let fd = fd_policy_jacobian(&data, k, &dx[k], &FdConfig { h: 1e-6, richardson: 1 }).unwrap();
            assert!(rel(&pass.steps[k].k_u, &fd) < 1e-6, "seed {seed} k {k}");
        }
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} usable instances");
}

#[test]
fn nominal_state_lies_in_every_critical_region() {
    for seed in 0..20 {
        let Some((data, dx, du)) = solved(seed) else { continue };
        let Ok(pass) = backward_pass_exact(&data, &dx, &du) else { continue };
        for (k, region) in pass.regions.iter().enumerate() {
            assert!(region.contains(&dx[k], 1e-8), "seed {seed} k {k}: {}", region.violation(&dx[k]));
        }
    }
}

#[test]
fn barrier_gains_match_finite_differences_of_the_barrier_solution() {
    let opts = BarrierOptions { tol: 1e-13, ..BarrierOptions::default() };
    let gamma = 1e-2;
    for seed in 0..8 {
        let Some((data, _, du)) = solved(seed) else { continue };
        let sol = solve_barrier(&data.full_qp(), gamma, &du, &opts).unwrap();
        for k in 0..data.horizon() {
            let warm = sol.u[k..].to_vec();
            let first = |p: &DVector<f64>| {
                solve_barrier(&data.tail_qp(k, p.clone()), gamma, &warm, &opts).ok().map(|s| s.u[0].clone())
            };
            let fd = fd_jacobian(first, &sol.x[k], &FdConfig { h: 1e-4, richardson: 2 }).unwrap();
            assert!(rel(&sol.gains[k], &fd) < 1e-6, "seed {seed} k {k}");
        }
    }
}

#[test]
fn barrier_gains_shrink_towards_exact_gains() {
    let Some((data, dx, du)) = (0..20).filter_map(solved).find(|(d, x, u)| {
        backward_pass_exact(d, x, u).is_ok_and(|p| p.all_strictly_complementary())
    }) else {
        panic!("no strictly complementary instance");
    };
    let exact = backward_pass_exact(&data, &dx, &du).unwrap().gains();
    let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&g| {
            let k = barrier_gains(&data, &du, g, &BarrierOptions::default()).unwrap().gains;
            k.iter().zip(&exact).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt()
        })
        .collect();
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn affine_policy_solves_the_tail_problem_inside_its_region(seed in 0u64..200, pick in 0usize..8) {
        let Some((data, dx, du)) = solved(seed) else { return Ok(()) };
        let Ok(pass) = backward_pass_exact(&data, &dx, &du) else { return Ok(()) };
        prop_assume!(pass.all_strictly_complementary());
        let k = pick % data.horizon();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let Ok(samples) = sample_critical_region(&pass.regions[k], &dx[k], 5, 0.3, 0.0, &mut rng) else { return Ok(()) };
        for p in &samples.points {
            let reference = tail_policy(&data, k, p).expect("tail problem solves");
            prop_assert!((pass.steps[k].policy(p) - reference).amax() < 1e-7);
        }
    }
}
