//! Command-line driver: configuration, subcommands and run manifests.

pub mod commands;
pub mod compare;
pub mod config;
pub mod error;
pub mod manifest;
pub mod out;
pub mod setup;
pub mod suite;

pub use config::{Config, ConfigError};
pub use error::CliError;
pub use manifest::RunManifest;
pub use suite::{Criterion, Suite, Verdict};
