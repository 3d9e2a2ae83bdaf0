//! Configuration files, factor I/O, run modes and the example gallery of the `taps` tool.

pub mod config;
pub mod factors;
pub mod gallery;
pub mod run;

pub use config::{parse_config, parse_config_str, ConfigError, Mode, RunConfig};
pub use run::{execute, run, Overrides, Status};
