//! Command-line experiment harness: configuration, experiment drivers, CSV and SVG output.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod manifest;
pub mod svg;
pub mod table;
