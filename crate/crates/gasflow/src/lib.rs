//! File formats, configuration and the command-line driver around
//! `gasflow-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod format;
pub mod ingest;
pub mod report;
pub mod validate;

pub use error::{CliError, Result};
