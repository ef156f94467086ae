//! Command-line driver for `mbgibbs`: data generation, adaptation,
//! sampling, diagnostics and the figure pipelines.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod model;
pub mod plot;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
