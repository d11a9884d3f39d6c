//! Config parsing and subcommand dispatch for the `pdmp` binary.

pub mod commands;
pub mod config;

pub use commands::{execute, output_dir, Outcome};
pub use config::{emit_config, parse_config, ConfigError, RunConfig, Subcommand};
