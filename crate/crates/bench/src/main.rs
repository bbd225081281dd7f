use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trajsqp::Method;
use trajsqp_bench::config::GammaConfig;
use trajsqp_bench::{emit_report, load_config, run_experiment, ReportRow, RunSummary};

#[derive(Parser)]
#[command(name = "trajsqp", version, about = "Shooting SQP benchmarks with closed-loop rollouts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configured problem.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// OL, CL or CLG.
        #[arg(long)]
        method: Option<Method>,
        /// Fixed barrier weight for CLG.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol_primal: Option<f64>,
        #[arg(long)]
        tol_dual: Option<f64>,
        /// Artifact directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tabulate `summary.json` files from earlier runs.
    Report { summaries: Vec<PathBuf> },
}

fn main() -> ExitCode {
    env_logger::init();
    match Cli::parse().command {
        Command::Solve { config, method, gamma, max_iters, tol_primal, tol_dual, out, seed } => {
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            if let Some(m) = method {
                cfg.method = m;
            }
            if let Some(g) = gamma {
                cfg.solver.gamma = GammaConfig::Fixed { value: g };
            }
            if let Some(n) = max_iters {
                cfg.solver.max_iters = n;
            }
            if let Some(t) = tol_primal {
                cfg.solver.tol_primal = t;
            }
            if let Some(t) = tol_dual {
                cfg.solver.tol_dual = t;
            }
            if out.is_some() {
                cfg.out = out;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            match run_experiment(&cfg) {
                Ok(run) => {
                    println!("{}", run.summary.line());
                    ExitCode::from(if run.summary.converged { 0 } else { 2 })
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Report { summaries } => {
            let rows: Vec<ReportRow> = summaries
                .iter()
                .map(|p| {
                    let summary: Option<RunSummary> =
                        std::fs::read_to_string(p).ok().and_then(|t| serde_json::from_str(&t).ok());
                    let (method, case) = summary.as_ref().map_or(("?".to_string(), 0), |s| (s.method.clone(), s.case));
                    ReportRow { method, case, summary }
                })
                .collect();
            print!("{}", emit_report(&rows));
            ExitCode::SUCCESS
        }
    }
}
