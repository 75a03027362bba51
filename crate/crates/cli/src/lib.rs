//! Experiment driver for the collocated optimal control systems: JSON configs
//! in, CSV tables and residual histories out.

pub mod config;
pub mod experiment;

pub use config::{validate_config, Diagnostic, ExperimentConfig};
pub use experiment::{export_matrices, run_solve_experiment, run_spectrum_experiment, SolveOutcome, Table};
