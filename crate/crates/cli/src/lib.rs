//! Config-driven experiment runner for the trial engine.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{ConfigError, ExperimentSpec};
pub use runner::{run_from_config, Failure, Overrides};
