//! Scenario runner for the training designs in `skg-core`: TOML scenario
//! files, SNR sweeps, a large-antenna convergence study and reproducible
//! CSV output.

pub mod config;
pub mod error;
pub mod output;
pub mod scenario;
pub mod sweep;

pub use config::{load_config, ScenarioConfig, Strategy};
pub use error::{BenchError, Result};
pub use output::{emit_convergence, emit_outputs};
pub use sweep::{run_capacity_sweep, run_large_antenna_convergence, run_pilot_sweep, SweepResult, SweepRow};
