//! Scenario files, run artifacts and the `prunetrace` command line on top of
//! [`prunetrace_core`].

pub mod config;
pub mod error;
pub mod generate;
pub mod manifest;
pub mod pgm;
pub mod run;
pub mod scenario;

pub use config::{load, Config, LoadedConfig};
pub use error::CliError;
pub use scenario::{validate, Scenario};
