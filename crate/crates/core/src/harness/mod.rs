//! Experiment orchestration: configuration, the active-learning loop,
//! the greedy/MCR benchmark, statistics, and result reporting.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod report;
pub mod stats;

pub use compare::{mode_compare, ComparisonSummary};
pub use config::{ClassifierConfig, DatasetConfig, ExperimentConfig, StrategySettings};
pub use experiment::{
    default_gamma_grid, read_records, run_experiment, run_experiment_on, run_replicate,
    tune_gamma, write_records, ExperimentRecord, IterationRecord,
};
pub use report::{build_report, Report};
pub use stats::{mean_std, welch_t_test};
