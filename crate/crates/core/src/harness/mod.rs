//! Experiment plumbing: configuration files, multi-seed runs, CSV metrics,
//! run comparison and the built-in verification suites.

pub mod check;
mod config;
mod experiment;
mod metrics;

pub use check::{run_suite, CheckResult, Suite};
pub use config::{parse_config, EnvConfig, ExperimentConfig, GridConfig};
pub use experiment::{compare_runs, format_summaries, run_experiment, train_seed, ExperimentOutputs, RunSummary};
pub use metrics::{
    aggregate, read_metrics_csv, write_aggregate_csv, write_metrics, write_metrics_csv, AggregateRow, EpochRecord,
    TrainingLog, METRIC_COLUMNS,
};
