//! Command-line front end: configuration, model files, experiments and
//! plot-data export.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod model_file;
pub mod pgm;

pub use cli::{run, Cli};
pub use error::{CliError, CliResult};
