//! Configuration, orchestration and report output for the `plap` binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod profiles;

pub use commands::{run, Command, Options, RunFailure, Summary};
pub use config::{Check, ConfigError, Format, RunConfig};
