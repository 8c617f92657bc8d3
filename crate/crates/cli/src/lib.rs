//! Library behind the `tgc` binary: dataset ingestion, reports and commands.

pub mod commands;
pub mod dataset;
pub mod error;
pub mod report;

pub use commands::{run, Cli, Command};
pub use error::{CliError, CliResult};
