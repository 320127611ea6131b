//! Command-line front end: configuration parsing, dispatch and report
//! formatting.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{run, Cli, Command, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};
pub use config::{parse_config, parse_config_str, RunConfig, StrikeSpec};
