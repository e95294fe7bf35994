//! Monte Carlo driver for backscatter-assisted NOMA experiments.
//!
//! [`run_experiment`] sweeps one scenario parameter, evaluates each
//! requested scheme on independent trials and reports means with standard
//! errors; [`output::write_csv`] renders the result.

pub mod config;
pub mod dump;
pub mod experiment;
pub mod output;
pub mod presets;
pub mod selftest;
pub mod stats;

pub use experiment::{run_experiment, run_experiment_with_threads, Audit, ExperimentSpec, Row, SchemeKind, Sweep, SweepResult};
