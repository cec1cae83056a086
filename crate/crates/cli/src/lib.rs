//! Command-line front end: dataset synthesis, encoding, training,
//! prediction, evaluation, gradient checking and regime reports.

mod commands;
pub mod protocol;
pub mod report;

pub use commands::{execute, resolve_train_config, run, Cli, Command, Failure, DATA_ROOT_ENV};
