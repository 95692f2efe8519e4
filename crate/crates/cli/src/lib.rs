//! Command-line harness around the `geospar` library: config and file
//! parsing plus the bodies of the `build`, `replay`, `bench`, `ujl` and
//! `verify` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::Outcome;
pub use config::RunConfig;
pub use error::CliError;
