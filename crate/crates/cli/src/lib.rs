//! Command-line front end for the photon-pair condensate simulator.
//!
//! A run resolves an [`ExperimentConfig`] (file, recipe or overrides),
//! executes one of the experiments in [`experiments`] and writes
//! `manifest.json`, `summary.json` and CSV tables into the output directory.

pub mod config;
pub mod experiments;
pub mod output;
pub mod recipes;

use std::path::Path;

use thiserror::Error;

pub use config::{Experiment, ExperimentConfig, RawConfig, Value};
pub use output::{Artifacts, Table, CSV_SCHEMA};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("run failed: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

/// Where the base configuration comes from.
#[derive(Clone, Debug)]
pub enum Source<'a> {
    File(&'a Path),
    Recipe(&'a str),
    /// Overrides only; `experiment=...` must be among them.
    Empty,
}

/// Loads the base configuration and applies `key=value` overrides in order.
pub fn resolve(source: Source, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut raw = match source {
        Source::File(p) => RawConfig::from_file(p)?,
        Source::Recipe(name) => recipes::load(name)?,
        Source::Empty => RawConfig::default(),
    };
    for o in overrides {
        raw.apply_override(o)?;
    }
    ExperimentConfig::resolve(raw, experiments::specs)
}

/// Runs the experiment and writes its artifacts.
pub fn execute(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let art = experiments::run(cfg)?;
    output::write_all(cfg, &art)?;
    Ok(art)
}
