//! File formats, vote dumps, JSON reports and the `pillarvote` command line,
//! on top of `pillarvote-core`.

pub mod commands;
pub mod error;
pub mod formats;
pub mod report;
pub mod votes;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
