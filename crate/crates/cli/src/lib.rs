//! Command-line front end: configuration, experiment drivers and result
//! files.

pub mod commands;
pub mod config;
pub mod error;
pub mod histogram;

pub use config::{Cli, Command, Flags, RunConfig};
pub use error::CliError;
pub use histogram::{histogram, Histogram};
