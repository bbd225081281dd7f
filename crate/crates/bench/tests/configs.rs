use std::path::Path;

use trajsqp_bench::{envs, load_config};

#[test]
fn shipped_configs_load_and_build() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg = load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let env = envs::build(&cfg).unwrap();
            assert_eq!(env.u_init.len(), env.problem.horizon());
            seen += 1;
        }
    }
    assert_eq!(seen, 15);
}

#[test]
fn car_case_three_runs_in_process() {
    let cfg = load_config(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/car_3_CLG.json")).unwrap();
    let out = trajsqp_bench::run_experiment(&cfg).unwrap();
    assert!(out.summary.converged);
    assert!(out.summary.violation > -1e-4);
    assert_eq!(out.summary.config_hash, cfg.hash());
}
