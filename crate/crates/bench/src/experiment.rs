//! Running one configured experiment and writing its artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use trajsqp::{sqp_solve, SolveReport};

use crate::config::BenchConfig;
use crate::envs;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Solver(#[from] trajsqp::Error),
    #[error("writing artifacts: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
}

/// The per-run columns of the statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub env: String,
    pub case: usize,
    pub method: String,
    pub converged: bool,
    /// Iterations taken, or the 1-based iteration at which the run stalled.
    pub iterations: usize,
    pub stall: Option<String>,
    pub objective: f64,
    /// Smallest state-constraint value; negative means infeasible.
    pub violation: f64,
    pub time_per_iter_s: f64,
    pub seed: u64,
    pub config_hash: String,
}

impl RunSummary {
    pub fn line(&self) -> String {
        let iter = match &self.stall {
            Some(reason) => format!("stall({}, {reason})", self.iterations),
            None => self.iterations.to_string(),
        };
        format!(
            "{} case {} {}: Converged={} Iter={} Obj={:.4} Viol={:.3e} Time/it={:.3}s",
            self.env, self.case, self.method, self.converged, iter, self.objective, self.violation, self.time_per_iter_s
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: SolveReport,
    pub summary: RunSummary,
}

pub fn run_experiment(cfg: &BenchConfig) -> Result<RunOutput, RunError> {
    let env = envs::build(cfg)?;
    let start = Instant::now();
    let report = sqp_solve(&env.problem, env.u_init, &cfg.options())?;
    let elapsed = start.elapsed().as_secs_f64();
    let iterations = match report.stall {
        Some((iter, _)) => iter + 1,
        None => report.iteration_count(),
    };
    let time_per_iter_s = if cfg.solver.record_timing { elapsed / report.iteration_count().max(1) as f64 } else { 0.0 };
    let summary = RunSummary {
        env: cfg.env.label().to_string(),
        case: cfg.case,
        method: cfg.method.label().to_string(),
        converged: report.converged,
        iterations,
        stall: report.stall.map(|(_, r)| r.label().to_string()),
        objective: report.final_objective,
        violation: state_violation(&report),
        time_per_iter_s,
        seed: cfg.seed,
        config_hash: cfg.hash(),
    };
    if let Some(dir) = &cfg.out {
        write_artifacts(dir, cfg, &report, &summary)?;
    }
    Ok(RunOutput { report, summary })
}

fn state_violation(report: &SolveReport) -> f64 {
    let spec = &report.spec;
    let it = &report.final_iterate;
    let v = (0..=spec.horizon())
        .flat_map(|k| spec.state_constraint_values(k, &it.x[k]).iter().copied().collect::<Vec<_>>())
        .fold(f64::INFINITY, f64::min);
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

fn write_artifacts(dir: &Path, cfg: &BenchConfig, report: &SolveReport, summary: &RunSummary) -> Result<(), RunError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), cfg.to_json() + "\n")?;
    write_iterations(&dir.join("iterations.csv"), report, cfg.solver.record_timing)?;
    write_trajectory(&dir.join("trajectory.csv"), report)?;
    write_reconstruction(&dir.join("reconstruction.csv"), report)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary).expect("summary serializes") + "\n")?;
    fs::write(dir.join("summary.txt"), summary.line() + "\n")?;
    Ok(())
}

pub const ITERATION_HEADER: [&str; 9] = [
    "iter",
    "alpha",
    "objective",
    "max_violation",
    "kkt_stationarity",
    "kkt_complementarity",
    "time_qp_s",
    "time_gains_s",
    "time_linesearch_s",
];

fn write_iterations(path: &Path, report: &SolveReport, timing: bool) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ITERATION_HEADER)?;
    let t = |v: f64| if timing { v } else { 0.0 };
    for r in &report.iterations {
        w.write_record([
            r.iter.to_string(),
            r.alpha.to_string(),
            r.objective.to_string(),
            r.max_violation.to_string(),
            r.stationarity.to_string(),
            r.complementarity.to_string(),
            t(r.time_qp_s).to_string(),
            t(r.time_gains_s).to_string(),
            t(r.time_linesearch_s).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_trajectory(path: &Path, report: &SolveReport) -> Result<(), RunError> {
    let it = &report.final_iterate;
    let n = it.x[0].len();
    let m = it.u.first().map_or(0, |u| u.len());
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = std::iter::once("k".to_string())
        .chain((0..n).map(|i| format!("x{i}")))
        .chain((0..m).map(|i| format!("u{i}")))
        .collect();
    w.write_record(&header)?;
    for (k, x) in it.x.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        match it.u.get(k) {
            Some(u) => row.extend(u.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), m)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per iteration and time step.
fn write_reconstruction(path: &Path, report: &SolveReport) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "k", "error", "du_norm"])?;
    for r in &report.iterations {
        for (k, (e, d)) in r.reconstruction.iter().flatten().zip(&r.step_norms).enumerate() {
            w.write_record([r.iter.to_string(), k.to_string(), e.to_string(), d.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One slot of the aggregate table; `summary` is `None` for a run that is
/// missing.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub method: String,
    pub case: usize,
    pub summary: Option<RunSummary>,
}

/// Aligned text table with the statistics columns plus seed and config hash.
pub fn emit_report(rows: &[ReportRow]) -> String {
    let header = ["Method", "Case", "Converged", "Iter", "Obj", "Viol", "Time/it [s]", "Seed", "Config"];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for row in rows {
        let mut line = vec![row.method.clone(), row.case.to_string()];
        match &row.summary {
            Some(s) => line.extend([
                if s.converged { "yes" } else { "no" }.to_string(),
                match &s.stall {
                    Some(_) => format!("stall ({})", s.iterations),
                    None => s.iterations.to_string(),
                },
                format!("{:.2}", s.objective),
                format!("{:.3e}", s.violation),
                format!("{:.2}", s.time_per_iter_s),
                s.seed.to_string(),
                s.config_hash.clone(),
            ]),
            None => line.extend(["absent".to_string()].into_iter().chain(std::iter::repeat_n("-".to_string(), 6))),
        }
        cells.push(line);
    }
    let widths: Vec<usize> = (0..header.len()).map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, r) in cells.iter().enumerate() {
        let line: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(method: &str, case: usize) -> RunSummary {
        RunSummary {
            env: "car".into(),
            case,
            method: method.into(),
            converged: true,
            iterations: 12,
            stall: None,
            objective: 21.49,
            violation: 3.25e-6,
            time_per_iter_s: 0.3,
            seed: 0,
            config_hash: "abc".into(),
        }
    }

    #[test]
    fn single_run_gives_one_data_row() {
        let t = emit_report(&[ReportRow { method: "OL".into(), case: 3, summary: Some(summary("OL", 3)) }]);
        assert_eq!(t.lines().count(), 3);
        assert!(t.lines().nth(2).unwrap().contains("21.49"));
    }

    #[test]
    fn full_grid_and_missing_rows() {
        let mut rows = Vec::new();
        for m in ["OL", "CL", "CLG"] {
            for c in 1..=3 {
                let summary = (m != "CL" || c != 2).then(|| summary(m, c));
                rows.push(ReportRow { method: m.into(), case: c, summary });
            }
        }
        let t = emit_report(&rows);
        assert_eq!(t.lines().count(), 11);
        assert_eq!(t.matches("absent").count(), 1);
    }
}
