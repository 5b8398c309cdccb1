//! Command-line harness: a JSON experiment config, deterministic per-stage
//! seeds, and reports under one output tree.

pub mod config;
pub mod error;
pub mod layout;
pub mod stages;

use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, Stage};
pub use error::{CliError, Result};
pub use layout::Run;

/// Loads `config_path` and runs `stage` (validation happens before any work).
pub fn execute(config_path: &Path, seed: Option<u64>, stage: Stage, out: Option<PathBuf>) -> Result<()> {
    let config = ExperimentConfig::load(config_path)?;
    let run = Run::new(config, config_path, seed, out);
    log::info!(
        "config {} (hash {}), seed {}, out {}",
        config_path.display(),
        &run.config_hash[..12],
        run.config.seed,
        run.out.display()
    );
    stages::run_stage(&run, stage)
}
