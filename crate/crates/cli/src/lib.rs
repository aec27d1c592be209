//! Experiment runner for the modular-arithmetic MLP library: task parsing,
//! JSON configs, named experiments and run records.

pub mod config;
pub mod error;
pub mod experiments;
pub mod parse;
pub mod record;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use parse::{parse_polynomial, parse_task, ParseError, ParsedTask, TaskExpr};
