//! Experiment runner behind the `qmimo` binary: TOML experiment files in,
//! tidy CSV out.

pub mod error;
pub mod output;
pub mod runner;
pub mod spec;
pub mod verify;

pub use error::CliError;
pub use output::{Cell, Table};
pub use runner::run_experiment;
pub use spec::{ExperimentSpec, Kind, Overrides};
pub use verify::{verify, VerifyReport};
