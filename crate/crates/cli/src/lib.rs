//! File formats, configuration and command implementations behind the
//! `phasefac` binary.

pub mod commands;
pub mod config;
pub mod container;
pub mod error;
pub mod files;
pub mod svg;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
