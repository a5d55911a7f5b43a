//! Experiment runner for the cascading-risk library: risk profiles, weight
//! and ε sweeps as CSV, and an oracle validation report.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod validate;

pub use config::{ExperimentConfig, Overrides, SimSection, WeightSweep};
pub use error::CliError;
