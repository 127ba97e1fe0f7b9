//! Command-line front end: configuration, CSV ingestion and output tables.

pub mod commands;
pub mod config;
pub mod ingest;

pub use commands::{analyze, run_analysis, synth, Overrides};
pub use config::{RunConfig, SynthConfig};
pub use ingest::{ingest, write_dataset, DropReport};
