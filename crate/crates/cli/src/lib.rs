//! Command-line front end of `permgibbs`: configuration layering and the
//! subcommands.

pub mod commands;
pub mod config;
