//! Binary adversarial detector: a small 3D CNN over `(x, y, f, c)` feature
//! stacks, trained with BCE, one model per attack kind.

use std::path::Path;

use fcd_tensor::{io, loss, LayerSpec, Model, ModelSpec, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::AttackKind;
use crate::error::{CoreError, Result};
use crate::features::{Feature, FeatureStack};
use crate::train::{fit, infer_chunked, FitConfig, FitReport, Target};
use crate::{CHANNELS, IMAGE_SIDE};

/// Probabilities are kept this far from 0 and 1 so scores stay strictly
/// inside the open interval even when the f32 sigmoid saturates.
pub const PROBABILITY_FLOOR: f64 = 1e-7;

/// Detector architecture for `planes` stacked features.
///
/// conv 10@3³ → conv 15@3³ → pool 3×3×min(3, f) → conv 25@3×3×1 → pool
/// 2×2×1 → dropout 0.4 → dense 20 → dropout 0.2 → dense 1 → sigmoid.
/// Convs are ReLU; the first two keep their extent, the third pads x/y by
/// one so the 10×10 map survives to the second pool.
pub fn detector_spec(planes: usize) -> Result<ModelSpec> {
    if planes == 0 {
        return Err(CoreError::Empty("feature order"));
    }
    let layers = vec![
        LayerSpec::conv3d_same(10, [3, 3, 3]),
        LayerSpec::relu(),
        LayerSpec::conv3d_same(15, [3, 3, 3]),
        LayerSpec::relu(),
        LayerSpec::maxpool3d([3, 3, planes.min(3)]),
        LayerSpec::conv3d(25, [3, 3, 1], [1, 1, 1], [[1, 1], [1, 1], [0, 0]]),
        LayerSpec::relu(),
        LayerSpec::maxpool3d([2, 2, 1]),
        LayerSpec::flatten(),
        LayerSpec::dropout(0.4),
        LayerSpec::dense(20),
        LayerSpec::relu(),
        LayerSpec::dropout(0.2),
        LayerSpec::dense(1),
        LayerSpec::sigmoid(),
    ];
    Ok(ModelSpec::new(
        "detector",
        vec![IMAGE_SIDE, IMAGE_SIDE, planes, CHANNELS],
        layers,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub fit: FitConfig,
    /// Share of the training pairs held back for early stopping.
    pub validation_fraction: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig {
                epochs: 50,
                batch_size: 32,
                learning_rate: 1e-3,
                patience: 5,
                seed: 0,
            },
            validation_fraction: 0.1,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        self.fit.validate("detector")?;
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(CoreError::InvalidArgument(format!(
                "detector validation_fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// A feature stack with its ground truth (`true` = adversarial).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledStack {
    pub stack: FeatureStack,
    pub adversarial: bool,
}

#[derive(Clone, Debug)]
pub struct Detector {
    pub model: Model<f32>,
    pub attack: AttackKind,
    pub feature_order: Vec<Feature>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DetectorMeta {
    attack: AttackKind,
    feature_order: Vec<Feature>,
}

fn names(order: &[Feature]) -> Vec<String> {
    order.iter().map(|f| f.to_string()).collect()
}

fn check_orders<'a>(expected: &[Feature], stacks: impl IntoIterator<Item = &'a FeatureStack>) -> Result<()> {
    for s in stacks {
        if s.feature_order != expected {
            return Err(CoreError::FeatureOrder {
                expected: names(expected),
                actual: names(&s.feature_order),
            });
        }
    }
    Ok(())
}

fn bce_on(model: &Model<f32>, stacks: &[&LabeledStack]) -> Result<f64> {
    let inputs: Vec<Tensor<f32>> = stacks.iter().map(|s| s.stack.tensor.clone()).collect();
    let preds = infer_chunked(model, &inputs, 64)?;
    let total: f64 = preds
        .iter()
        .zip(stacks)
        .map(|(p, s)| {
            let p = (p.data()[0] as f64).clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
            loss::bce_scalar(p, if s.adversarial { 1.0 } else { 0.0 })
        })
        .sum::<std::result::Result<f64, _>>()?;
    Ok(total / stacks.len() as f64)
}

/// Trains a detector on a 1:1 benign/adversarial set. A stratified
/// `validation_fraction` of each class drives early stopping on BCE.
pub fn train_detector(
    data: &[LabeledStack],
    attack: AttackKind,
    feature_order: &[Feature],
    config: &DetectorConfig,
) -> Result<(Detector, FitReport)> {
    config.validate()?;
    if data.is_empty() {
        return Err(CoreError::Empty("detector training set"));
    }
    let positives = data.iter().filter(|s| s.adversarial).count();
    let negatives = data.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(CoreError::DegenerateTrainingSet(format!(
            "all {} labels are {}",
            data.len(),
            if positives == 0 { "benign" } else { "adversarial" }
        )));
    }
    if positives != negatives {
        return Err(CoreError::Unbalanced { positives, negatives });
    }
    check_orders(feature_order, data.iter().map(|s| &s.stack))?;
    let spec = detector_spec(feature_order.len())?;
    for s in data {
        s.stack.tensor.expect_shape(&spec.input_shape)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.fit.seed ^ 0x5eed);
    let mut train_idx = Vec::with_capacity(data.len());
    let mut val_idx = Vec::new();
    for label in [false, true] {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].adversarial == label).collect();
        idx.shuffle(&mut rng);
        let held = ((idx.len() as f64 * config.validation_fraction).round() as usize).min(idx.len() - 1);
        val_idx.extend_from_slice(&idx[..held]);
        train_idx.extend_from_slice(&idx[held..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    // without a carve-out, early stopping watches the training loss
    let monitor: Vec<&LabeledStack> = if val_idx.is_empty() { &train_idx } else { &val_idx }
        .iter()
        .map(|&i| &data[i])
        .collect();

    let mut model = Model::<f32>::new(spec, config.fit.seed)?;
    let report = fit(
        &mut model,
        train_idx.len(),
        &config.fit,
        |batch| {
            let items: Vec<Tensor<f32>> = batch.iter().map(|&b| data[train_idx[b]].stack.tensor.clone()).collect();
            let labels = batch
                .iter()
                .map(|&b| if data[train_idx[b]].adversarial { 1.0 } else { 0.0 })
                .collect();
            Ok((Tensor::stack(&items)?, Target::Binary(labels)))
        },
        |m| bce_on(m, &monitor),
    )?;
    Ok((
        Detector {
            model,
            attack,
            feature_order: feature_order.to_vec(),
        },
        report,
    ))
}

impl Detector {
    /// Probability that `stack` is adversarial, strictly inside (0, 1).
    pub fn detect(&self, stack: &FeatureStack) -> Result<f64> {
        Ok(self.detect_batch(std::slice::from_ref(stack))?[0])
    }

    pub fn detect_batch(&self, stacks: &[FeatureStack]) -> Result<Vec<f64>> {
        check_orders(&self.feature_order, stacks)?;
        let inputs: Vec<Tensor<f32>> = stacks.iter().map(|s| s.tensor.clone()).collect();
        for t in &inputs {
            t.expect_shape(self.model.input_shape())?;
        }
        Ok(infer_chunked(&self.model, &inputs, 64)?
            .iter()
            .map(|p| (p.data()[0] as f64).clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR))
            .collect())
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        io::save_model(&self.model, dir, stem)?;
        let meta = DetectorMeta {
            attack: self.attack,
            feature_order: self.feature_order.clone(),
        };
        std::fs::write(dir.join(format!("{stem}.detector.json")), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let meta: DetectorMeta = crate::data::read_json(&dir.join(format!("{stem}.detector.json")))?;
        let model = io::load_model(dir, stem)?;
        if model.input_shape().get(2) != Some(&meta.feature_order.len()) {
            return Err(CoreError::InvalidArgument(format!(
                "detector {stem}: plane count disagrees with its feature order"
            )));
        }
        Ok(Self {
            model,
            attack: meta.attack,
            feature_order: meta.feature_order,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub attack: AttackKind,
    pub feature_order: Vec<Feature>,
    /// Share of stacks on the correct side of 0.5 (≥ 0.5 means adversarial).
    pub accuracy: f64,
    pub auc: f64,
    /// `(false-positive rate, true-positive rate)` from (0,0) to (1,1).
    pub roc_points: Vec<(f64, f64)>,
    pub n_test: usize,
}

/// ROC points over every distinct score threshold, highest first. Tied
/// scores move both rates in a single step.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != labels.len() {
        return Err(CoreError::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(CoreError::Empty("score set"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(CoreError::Metric("non-finite detector score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(CoreError::Metric("ROC needs both benign and adversarial examples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under ROC points.
pub fn auc_trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

/// Share of (adversarial, benign) pairs scored in the right order, ties
/// counting one half. Quadratic; used to cross-check [`auc_trapezoid`].
pub fn auc_pairwise(scores: &[f64], labels: &[bool]) -> Result<f64> {
    roc_curve(scores, labels)?;
    let positives: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let negatives: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let mut wins = 0.0;
    for &p in &positives {
        for &n in &negatives {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    let pairs = (positives.len() * negatives.len()) as f64;
    Ok(wins / pairs)
}

/// Accuracy, ROC and AUC for precomputed scores.
pub fn report_from_scores(
    attack: AttackKind,
    feature_order: &[Feature],
    scores: &[f64],
    labels: &[bool],
) -> Result<DetectionReport> {
    let roc_points = roc_curve(scores, labels)?;
    let correct = scores.iter().zip(labels).filter(|(&s, &l)| (s >= 0.5) == l).count();
    Ok(DetectionReport {
        attack,
        feature_order: feature_order.to_vec(),
        accuracy: correct as f64 / scores.len() as f64,
        auc: auc_trapezoid(&roc_points),
        roc_points,
        n_test: scores.len(),
    })
}

/// Scores every test stack and summarizes. Returns the raw scores as well,
/// in input order.
pub fn evaluate_detector(detector: &Detector, test: &[LabeledStack]) -> Result<(DetectionReport, Vec<f64>)> {
    if test.is_empty() {
        return Err(CoreError::Empty("detector test set"));
    }
    let stacks: Vec<FeatureStack> = test.iter().map(|s| s.stack.clone()).collect();
    let scores = detector.detect_batch(&stacks)?;
    let labels: Vec<bool> = test.iter().map(|s| s.adversarial).collect();
    let report = report_from_scores(detector.attack, &detector.feature_order, &scores, &labels)?;
    Ok((report, scores))
}

pub fn roc_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (f, t) in points {
        out.push_str(&format!("{f},{t}\n"));
    }
    out
}
