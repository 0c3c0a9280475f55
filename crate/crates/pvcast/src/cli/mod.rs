//! Operator surface: run configuration and the subcommand implementations
//! behind the `pvcast` binary.

pub mod commands;
pub mod config;
