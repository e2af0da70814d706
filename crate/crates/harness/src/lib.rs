//! Experiment harness for constrained mean-field control: configuration,
//! training and evaluation pipelines, artifact writers and the CLI.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;

pub use error::{HarnessError, Result};
