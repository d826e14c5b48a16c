//! Command-line front end for `jnet-core`.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{Output, Overrides};
pub use config::RunConfig;
pub use error::CliError;
