//! Experiment orchestration: grids of Monte Carlo runs, summary statistics,
//! exact checks, Monte Carlo checks of the 3-Majority analysis, and file
//! output.

pub mod checks;
pub mod config;
pub mod consistency;
pub mod exact;
pub mod grid;
pub mod output;
pub mod stats;

pub use checks::{check_bias_doubling, check_drift_tail, check_majority_preservation};
pub use config::{ExperimentConfig, InitRule};
pub use exact::{hierarchy_items, run_check, CheckItem, CheckReport, ExactCheck, ExactParams};
pub use grid::{run_grid, with_pool, worker_count, CellStats, GridResult, THREADS_ENV};
pub use output::emit_plot_data;
pub use stats::{chi_square_gof, mann_whitney, Summary};
