//! Experiment configuration, profiles, sweeps and output files.

pub mod checkpoint;
pub mod config;
pub mod io;
pub mod profiles;
pub mod sweep;

pub use checkpoint::Checkpoint;
pub use config::{ExperimentConfig, Origin, Profile, ResolvedConfig, SweepAxis, SweepConfig};
pub use sweep::{run_cell, run_sweep, write_sweep, Cell, RunRecord, SweepOutcome};
