//! Experiment runner: configuration, subcommands and their CSV, SVG and
//! checkpoint artifacts.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod metrics;
pub mod svg;
