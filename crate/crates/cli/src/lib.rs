//! Configuration, task scheduling and artifact output for the `twistlab`
//! binary.

pub mod config;
pub mod plot;
pub mod runner;

pub use config::{ConfigError, Experiment, ExperimentConfig, OutputFormat};
pub use runner::{run, RunError, RunManifest};
