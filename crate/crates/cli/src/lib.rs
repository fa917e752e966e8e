//! Command-line runner for the bias-aware inference experiments: dataset
//! simulation, network training, amortised inference, calibration checks and
//! the household MCMC baseline.

pub mod apps;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod svg;

pub use commands::Context;
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
