//! Library backing the `dispersim` command-line driver: config schema and
//! validation, shipped presets, artifact writers, study fitting, and the
//! command implementations.

pub mod commands;
pub mod config;
pub mod output;
pub mod presets;
pub mod studies;
