//! Command-line front end: run configuration, shipped presets and the
//! subcommand implementations behind the `sparsedict` binary.

pub mod commands;
pub mod config;
pub mod presets;
