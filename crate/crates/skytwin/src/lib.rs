//! Command-line driver and read-only HTTP API for the skytwin pipeline.

pub mod cli;
pub mod server;
