//! Command-line front end: configuration parsing and validation, subcommand
//! dispatch and artifact emission.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

pub use config::{canonical, parse_config, ConfigError, RunConfig};
pub use run::{run, Overrides, Status};
