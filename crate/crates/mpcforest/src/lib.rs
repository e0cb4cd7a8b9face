//! File formats, run configuration and the command implementations behind
//! the `mpcforest` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use config::{Algorithm, GraphKind, PartialConfig, RunConfig};
pub use error::CliError;
