//! Training, evaluation, experiment protocols and reports for the channel
//! predictor, plus the `vichan` command line.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod plots;
pub mod report;
pub mod schedule;
pub mod train;

pub use config::{SchedulerConfig, TrainConfig};
pub use data::DataContext;
pub use error::{HarnessError, Result};
pub use eval::{evaluate_run, MetricsRecord};
pub use experiments::ExperimentOptions;
pub use report::{ExperimentReport, ReportFormat, RunReport};
pub use train::{train_run, RunOptions, RunSummary};
