//! Command-line front end for `egan-core`: configuration files, on-disk
//! formats and the `tabular`, `train`, `eval` and `export` subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use cli::run;
pub use error::{CliError, CliResult};
