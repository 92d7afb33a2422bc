//! Command-line front end: training sweeps, evaluation and report tables.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod report;

pub use commands::{run, Cli, CliError};
