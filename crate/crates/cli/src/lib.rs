//! Config-driven front end for sampling, training and evaluating gravity
//! compensation models.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_evaluate, cmd_sample, cmd_train, EvalMode, Manifest};
pub use config::{Experiment, ExperimentConfig, Overrides};
pub use error::{exit, CliError, CliResult};
