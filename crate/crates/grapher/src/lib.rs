//! File formats, checkpoints and the `grapher` command line around
//! [`grapher_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod kv;
pub mod report;

pub use error::{CliError, CliResult};
