//! Batch front-end over the `pairlik` estimation library.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, Command, Manifest};
pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
