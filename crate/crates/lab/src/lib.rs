//! Experiment driver around `hierarchy-core`: strict JSON configuration,
//! named scenarios, run/convergence/flocking commands and the self-test suites.

pub mod commands;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod output;
pub mod selftest;

pub use config::{parse_config, RunConfig};
pub use error::{LabError, LabResult};
