//! Configuration, experiment subcommands and run manifests.

pub mod commands;
pub mod config;

pub use commands::{run_command, Command, Manifest};
pub use config::{ExperimentConfig, CONFIG_KEYS_HELP};
