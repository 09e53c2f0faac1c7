//! Experiment runner for the grid-mixture mode-collapse benchmark: config
//! parsing, multi-seed training with periodic evaluation, artifact dumps and
//! variant comparison tables.

pub mod compare;
pub mod config;
pub mod error;
pub mod runner;

pub use compare::{compare_variants, write_comparison, Comparison};
pub use config::{EvalConfig, TrainConfig};
pub use error::RunError;
pub use runner::{evaluate_checkpoint, run_experiment, run_seed, RunOptions, RunSummary};
