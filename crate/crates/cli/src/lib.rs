//! Library side of the `nlpm` command: configuration files, output formats
//! and the subcommands.

pub mod commands;
pub mod config;
pub mod output;

pub use config::{ConfigError, RunConfig};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "NLPM_OUTPUT_ROOT";

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod guide {}
