//! Command-line experiment runner for the Willmore flow laboratory.

pub mod commands;
pub mod config;

pub use commands::{run, write_manifest, Outcome};
pub use config::{Command, ExperimentConfig};
