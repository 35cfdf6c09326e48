//! Command-line front end for `dynbc-core`: scenario files, subcommands,
//! CSV outputs and run manifests.

pub mod commands;
pub mod config;
