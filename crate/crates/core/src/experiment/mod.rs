//! Experiments: several arms trained over several seeds, with summaries.

pub mod config;
pub mod runner;
pub mod summary;

pub use config::{render, validate_config, Arm, ExperimentSpec, ReportFormat, SCHEMA_VERSION};
pub use runner::{report, run_dir, run_experiment};
pub use summary::{summarize_run, ArmSummary, Promotion, RunStatus, RunSummary, Stats, SummaryTable, FAILURE_RMSE};
