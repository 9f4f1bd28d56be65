//! Command-line layer for `symmix`: run configurations, CSV/JSON
//! ingestion and output, and the four subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::{CliError, CliResult};
