//! Output tree, report envelopes and the artifact index.
//!
//! ```text
//! out/
//!   data/        synthetic CIFAR batches (only with data.synthetic)
//!   manifests/   image sets, AE splits, artifacts.json
//!   models/      victim, detectors, denoisers
//!   stacks/      feature stacks per split
//!   reports/     JSON reports, CSV tables, timings.json
//!   figures/     ROC CSVs and PNG strips
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{derive_seed, hex, ExperimentConfig, Stage};
use crate::error::{CliError, Result};

pub const VERSION: &str = concat!("fcd-cli ", env!("CARGO_PKG_VERSION"));

pub const INDEXED_DIRS: [&str; 5] = ["manifests", "models", "stacks", "reports", "figures"];
pub const INDEX_FILE: &str = "manifests/artifacts.json";
pub const TIMINGS_FILE: &str = "reports/timings.json";

#[derive(Serialize)]
struct Envelope<'a, T> {
    stage: Stage,
    config_hash: &'a str,
    seed: u64,
    version: &'a str,
    body: &'a T,
}

/// One invocation: the validated config plus resolved locations.
pub struct Run {
    pub config: ExperimentConfig,
    /// Directory relative config paths resolve against.
    pub base: PathBuf,
    pub out: PathBuf,
    pub config_hash: String,
}

impl Run {
    /// `seed` and `out` override the config's values.
    pub fn new(mut config: ExperimentConfig, config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        if let Some(s) = seed {
            config.seed = s;
        }
        let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let out = out.unwrap_or_else(|| base.join(&config.out_dir));
        let config_hash = config.hash();
        Self {
            config,
            base,
            out,
            config_hash,
        }
    }

    pub fn seed(&self, tag: &str) -> u64 {
        derive_seed(self.config.seed, tag)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn data_dir(&self) -> PathBuf {
        match &self.config.data.cifar_dir {
            Some(dir) => self.base.join(dir),
            None => self.path("data"),
        }
    }

    /// `rel` must exist; otherwise names the stage that produces it.
    pub fn require(&self, rel: &str, producer: Stage) -> Result<PathBuf> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::MissingArtifact {
                path: p.display().to_string(),
                stage: producer,
            })
        }
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<()> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(p, text)?;
        Ok(())
    }

    /// Writes `reports/<name>.json` wrapped with config hash, seed and version.
    pub fn write_report<T: Serialize>(&self, stage: Stage, name: &str, body: &T) -> Result<()> {
        let env = Envelope {
            stage,
            config_hash: &self.config_hash,
            seed: self.config.seed,
            version: VERSION,
            body,
        };
        self.write_text(&format!("reports/{name}.json"), &(serde_json::to_string_pretty(&env)? + "\n"))
    }

    pub fn record_timing(&self, stage: Stage, seconds: f64) -> Result<()> {
        let p = self.path(TIMINGS_FILE);
        let mut timings: BTreeMap<String, f64> = match fs::read(&p) {
            Ok(bytes) => serde_json::from_slice(&bytes)?,
            Err(_) => BTreeMap::new(),
        };
        timings.insert(stage.to_string(), seconds);
        self.write_text(TIMINGS_FILE, &(serde_json::to_string_pretty(&timings)? + "\n"))
    }

    /// Rewrites the sha256 index of every artifact except the index itself
    /// and the timings file.
    pub fn index_artifacts(&self) -> Result<()> {
        let mut files = Vec::new();
        for d in INDEXED_DIRS {
            collect_files(&self.path(d), &mut files)?;
        }
        let mut index = BTreeMap::new();
        for f in files {
            let rel = f
                .strip_prefix(&self.out)
                .expect("collected under out")
                .to_string_lossy()
                .replace('\\', "/");
            if rel == INDEX_FILE || rel == TIMINGS_FILE {
                continue;
            }
            index.insert(rel, hex(&Sha256::digest(fs::read(&f)?)));
        }
        self.write_text(INDEX_FILE, &(serde_json::to_string_pretty(&index)? + "\n"))
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if !dir.is_dir() {
        return Ok(());
    }
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}
