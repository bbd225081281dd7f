//! Benchmark environments and the experiment runner behind the `trajsqp`
//! command-line tool.

pub mod config;
pub mod envs;
pub mod experiment;

pub use config::{load_config, BenchConfig, EnvName};
pub use experiment::{emit_report, run_experiment, ReportRow, RunOutput, RunSummary};
