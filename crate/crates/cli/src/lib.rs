//! Command-line driver for the many-particle walk simulator: experiment
//! configuration, artifact output and checkpoint/resume.

pub mod config;
pub mod driver;
pub mod output;

pub use config::{parse_config, ConfigError, ExperimentConfig};
pub use driver::{
    oracle_check, resume, run_experiment, DriverError, OracleReport, RunControl, RunOutcome,
};
