//! The experiment document: one JSON file drives every stage.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use fcd_core::attacks::{AttackConfig, AttackKind};
use fcd_core::denoiser::{DenoiserConfig, Head, ReconstructionLoss};
use fcd_core::detector::DetectorConfig;
use fcd_core::features::{Feature, FeatureParams};
use fcd_core::metrics::SimilarityParams;
use fcd_core::synthetic::SyntheticConfig;
use fcd_core::train::FitConfig;
use fcd_core::victim::VictimConfig;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    PrepareData,
    TrainVictim,
    GenAttacks,
    ExtractFeatures,
    TrainDetector,
    EvalDetector,
    TrainDenoiser,
    EvalDenoiser,
    MetricsReport,
    RunAll,
}

impl Stage {
    /// Every stage `run-all` can sequence, in dependency order.
    pub const PIPELINE: [Stage; 9] = [
        Stage::PrepareData,
        Stage::TrainVictim,
        Stage::GenAttacks,
        Stage::ExtractFeatures,
        Stage::TrainDetector,
        Stage::EvalDetector,
        Stage::TrainDenoiser,
        Stage::EvalDenoiser,
        Stage::MetricsReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::PrepareData => "prepare-data",
            Stage::TrainVictim => "train-victim",
            Stage::GenAttacks => "gen-attacks",
            Stage::ExtractFeatures => "extract-features",
            Stage::TrainDetector => "train-detector",
            Stage::EvalDetector => "eval-detector",
            Stage::TrainDenoiser => "train-denoiser",
            Stage::EvalDenoiser => "eval-denoiser",
            Stage::MetricsReport => "metrics-report",
            Stage::RunAll => "run-all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Global seed; every stage derives its own seeds from it. `--seed` overrides.
    pub seed: u64,
    /// Output root; `--out` overrides. Relative to the config file.
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub victim: VictimSection,
    pub attacks: AttackSection,
    pub features: FeatureParams,
    pub detector: DetectorSection,
    pub denoiser: DenoiserSection,
    pub metrics: MetricsSection,
    /// Stages `run-all` executes; always run in pipeline order.
    #[serde(default = "all_stages")]
    pub stages: Vec<Stage>,
}

fn all_stages() -> Vec<Stage> {
    Stage::PIPELINE.to_vec()
}

/// Exactly one of `cifar_dir` and `synthetic` must be set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `data_batch_1..5.bin` and `test_batch.bin`. Relative to the config file.
    #[serde(default)]
    pub cifar_dir: Option<PathBuf>,
    /// Render a procedural stand-in dataset in the same binary layout under `<out>/data`.
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    /// Victim training images per class, from the train batches.
    pub victim_train_per_class: usize,
    /// Victim held-out images per class, from the test batch.
    pub victim_heldout_per_class: usize,
    /// Attack-pool images per class, from the test batch, disjoint from the held-out set.
    pub per_class_count: usize,
}

/// Optimizer schedule; the seed comes from the global one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
}

impl TrainingSection {
    pub fn fit(&self, seed: u64) -> FitConfig {
        FitConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            patience: self.patience,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct VictimSection {
    pub training: TrainingSection,
    /// Minimum held-out accuracy before attacks may run.
    pub accuracy_gate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    /// One entry per attack kind, run in this order.
    pub configs: Vec<AttackConfig>,
    /// Minimum victim confidence on the true label for a pool image to be attacked.
    pub confidence_floor: f64,
    /// Optional minimum confidence on the fooled class for an AE to count.
    #[serde(default)]
    pub fooled_confidence_floor: Option<f64>,
    /// Images per attack minibatch.
    pub batch: usize,
    /// Share of surviving benign images in the train split.
    pub split_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub training: TrainingSection,
    pub validation_fraction: f64,
    /// Planes of the combined detector.
    pub feature_order: Vec<Feature>,
    /// Attacks that also get one single-plane detector per feature.
    #[serde(default)]
    pub ablation_attacks: Vec<AttackKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DenoiserSection {
    pub training: TrainingSection,
    pub mid_width: usize,
    pub head: Head,
    pub validation_fraction: f64,
    /// Planes the reconstruction loss covers; defaults to the full stack.
    #[serde(default)]
    pub loss: ReconstructionLoss,
    /// One denoiser per set; the raw image plane is always prepended.
    pub feature_sets: Vec<Vec<Feature>>,
    /// Cap on training pairs taken from each attack (first in id order).
    #[serde(default)]
    pub max_pairs_per_attack: Option<usize>,
    /// Benign/adversarial/denoised strips written per attack and set.
    #[serde(default)]
    pub strips: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    /// Images in the similarity-table pool (all attacks must have fooled the victim on each).
    pub pool: usize,
    pub similarity: SimilarityParams,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn check_projection_order(what: &str, order: &[Feature]) -> Result<()> {
    check(!order.is_empty(), || format!("{what} is empty"))?;
    let unique: BTreeSet<_> = order.iter().collect();
    check(unique.len() == order.len(), || format!("{what} repeats a feature"))?;
    check(!order.contains(&Feature::Image), || {
        format!("{what} must list only entropy/mfs/pfs (the image plane is implicit)")
    })
}

fn check_training(what: &str, t: &TrainingSection) -> Result<()> {
    check(t.batch_size > 0 && t.learning_rate > 0.0, || {
        format!("{what}.training: batch_size and learning_rate must be positive")
    })
}

impl ExperimentConfig {
    /// Parses and validates; nothing touches the filesystem beyond reading `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        check(d.cifar_dir.is_some() != d.synthetic.is_some(), || {
            "data: set exactly one of cifar_dir and synthetic".into()
        })?;
        if let Some(s) = &d.synthetic {
            check(s.test_per_class >= d.victim_heldout_per_class + d.per_class_count, || {
                "data.synthetic.test_per_class must cover victim_heldout_per_class + per_class_count".into()
            })?;
            check(s.train_per_class >= d.victim_train_per_class, || {
                "data.synthetic.train_per_class must cover victim_train_per_class".into()
            })?;
        }
        check(d.victim_train_per_class > 0 && d.victim_heldout_per_class > 0 && d.per_class_count > 0, || {
            "data: per-class counts must be positive".into()
        })?;

        check_training("victim", &self.victim.training)?;
        check((0.0..=1.0).contains(&self.victim.accuracy_gate), || {
            "victim.accuracy_gate outside [0, 1]".into()
        })?;

        let a = &self.attacks;
        check(!a.configs.is_empty(), || "attacks.configs is empty".into())?;
        let kinds: BTreeSet<_> = a.configs.iter().map(|c| c.kind).collect();
        check(kinds.len() == a.configs.len(), || "attacks.configs repeats a kind".into())?;
        for c in &a.configs {
            c.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        check(a.batch > 0, || "attacks.batch must be positive".into())?;
        check(a.split_ratio > 0.0 && a.split_ratio < 1.0, || "attacks.split_ratio outside (0, 1)".into())?;

        check(self.features.entropy_window % 2 == 1 && self.features.entropy_window >= 3, || {
            "features.entropy_window must be odd and >= 3".into()
        })?;
        check(self.features.entropy_bins >= 2, || "features.entropy_bins must be >= 2".into())?;

        check_training("detector", &self.detector.training)?;
        self.detector_config(0).validate().map_err(|e| CliError::Config(e.to_string()))?;
        check_projection_order("detector.feature_order", &self.detector.feature_order)?;
        for k in &self.detector.ablation_attacks {
            check(kinds.contains(k), || format!("detector.ablation_attacks names unconfigured attack {k}"))?;
        }

        check_training("denoiser", &self.denoiser.training)?;
        self.denoiser_config(0).validate().map_err(|e| CliError::Config(e.to_string()))?;
        for (i, set) in self.denoiser.feature_sets.iter().enumerate() {
            check_projection_order(&format!("denoiser.feature_sets[{i}]"), set)?;
        }
        check(self.metrics.pool > 0, || "metrics.pool must be positive".into())?;
        check(!self.stages.contains(&Stage::RunAll), || "stages cannot contain run-all".into())
    }

    pub fn victim_config(&self, seed: u64) -> VictimConfig {
        VictimConfig {
            fit: self.victim.training.fit(seed),
            accuracy_gate: self.victim.accuracy_gate,
        }
    }

    pub fn detector_config(&self, seed: u64) -> DetectorConfig {
        DetectorConfig {
            fit: self.detector.training.fit(seed),
            validation_fraction: self.detector.validation_fraction,
        }
    }

    pub fn denoiser_config(&self, seed: u64) -> DenoiserConfig {
        DenoiserConfig {
            fit: self.denoiser.training.fit(seed),
            mid_width: self.denoiser.mid_width,
            head: self.denoiser.head,
            validation_fraction: self.denoiser.validation_fraction,
            loss: self.denoiser.loss,
        }
    }

    /// Detector variants as `(attack, feature order)`: the combined order
    /// for every attack, then single planes for the ablation attacks.
    pub fn detector_variants(&self) -> Vec<(AttackKind, Vec<Feature>)> {
        let mut out = Vec::new();
        for c in &self.attacks.configs {
            out.push((c.kind, self.detector.feature_order.clone()));
            if self.detector.ablation_attacks.contains(&c.kind) && self.detector.feature_order.len() > 1 {
                for &f in &self.detector.feature_order {
                    out.push((c.kind, vec![f]));
                }
            }
        }
        out
    }

    pub fn attack_kinds(&self) -> Vec<AttackKind> {
        self.attacks.configs.iter().map(|c| c.kind).collect()
    }

    /// Hash of the canonical JSON form, output directory excluded so the
    /// same experiment hashes alike wherever it is written.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }
}

/// Stage-local seed: the first eight bytes of sha256(seed ‖ tag).
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// JSON Schema of [`ExperimentConfig`], pretty-printed with a trailing newline.
pub fn schema_json() -> String {
    let schema = schemars::schema_for!(ExperimentConfig);
    serde_json::to_string_pretty(&schema).expect("schema serializes") + "\n"
}
