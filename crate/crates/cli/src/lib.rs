//! The `pmufault` command line: one subcommand per pipeline stage, and
//! `pipeline`, which chains them and writes a markdown report.
//!
//! Relative paths resolve against `--workspace`. Every output directory gets
//! a JSON manifest echoing the validated configuration.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use cli::{execute, main_with_args, Cli};
pub use config::WorkbenchConfig;
pub use error::CliError;
