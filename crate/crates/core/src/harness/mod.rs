//! Experiment harness behind the command-line tool: configuration, the
//! ablation and sweep protocols, and result files.

pub mod commands;
pub mod config;
pub mod report;
pub mod runner;

pub use commands::{execute, Command, CommandOutput, ExperimentSpec, METRICS_FILE, SNAPSHOT_FILE};
pub use config::{ExperimentConfig, SweepKind};
pub use report::{AblationRow, AblationTable, SweepRow, SweepTable};
pub use runner::{threads_from_env, DiagnoseReport, Harness, RunOutcome, RunSpec, THREADS_ENV};
