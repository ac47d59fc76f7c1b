//! Command-line front end: the `QFA1` binary container, JSON run
//! configuration, CSV series I/O and the `qfa` subcommands.

pub mod commands;
pub mod config;
pub mod container;
pub mod error;

pub use commands::{run, Cli, Command};
pub use container::Container;
pub use error::CliError;
