//! Experiment runner for `remix-re`: corpus splits, augmentation caches,
//! training, evaluation, grid search and synthetic corpora.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod pipeline;
pub mod synth;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
