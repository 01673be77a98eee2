//! Batch driver for `tfslab-core`: JSON configs in, CSV/JSON artifacts out,
//! plus the numbered self-test battery.

pub mod battery;
pub mod config;
pub mod error;
pub mod io;
pub mod run;

pub use config::{parse, ExperimentConfig, Problem};
pub use error::CliError;
pub use run::{run, RunReport};
