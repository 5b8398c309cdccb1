//! The classifier under attack: a small VGG-style CNN producing logits.

use std::path::Path;

use fcd_tensor::{io, loss, LayerSpec, Mode, Model, ModelSpec, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::argmax;
use crate::data::LabeledImage;
use crate::error::{CoreError, Result};
use crate::train::{fit, infer_chunked, FitConfig, FitReport, Target};
use crate::{CLASSES, IMAGE_SHAPE};

/// Conv widths 32, 32, 64, 64 (3×3, same padding, ReLU), 2×2 max-pool after
/// the second and fourth conv, then dense 256 + ReLU and dense 10 logits.
pub fn victim_spec() -> ModelSpec {
    let mut layers = Vec::new();
    for (i, width) in [32, 32, 64, 64].into_iter().enumerate() {
        layers.push(LayerSpec::conv2d_same(width, [3, 3]));
        layers.push(LayerSpec::relu());
        if i % 2 == 1 {
            layers.push(LayerSpec::maxpool2d([2, 2]));
        }
    }
    layers.extend([
        LayerSpec::flatten(),
        LayerSpec::dense(256),
        LayerSpec::relu(),
        LayerSpec::dense(CLASSES),
    ]);
    ModelSpec::new("victim", IMAGE_SHAPE.to_vec(), layers)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VictimConfig {
    pub fit: FitConfig,
    pub accuracy_gate: f64,
}

impl Default for VictimConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig {
                epochs: 30,
                batch_size: 64,
                learning_rate: 1e-3,
                patience: 3,
                seed: 0,
            },
            accuracy_gate: 0.70,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Victim {
    pub model: Model<f32>,
    /// Held-out accuracy; `None` until trained or loaded with a record of it.
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct VictimMeta {
    test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub logits: Vec<f64>,
    pub label: usize,
}

/// Which scalar the input gradient is taken of.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossKind {
    /// Softmax cross-entropy against the label.
    CrossEntropy,
    /// The raw logit of one class.
    Logit(usize),
}

/// Numerically stable softmax in f64.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn stack(images: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let owned: Vec<Tensor<f32>> = images.iter().map(|t| (*t).clone()).collect();
    Ok(Tensor::stack(&owned)?)
}

impl Victim {
    pub fn untrained(model: Model<f32>) -> Self {
        Self {
            model,
            test_accuracy: None,
        }
    }

    pub fn is_trained(&self) -> bool {
        self.test_accuracy.is_some()
    }

    pub fn predict(&self, image: &Tensor<f32>) -> Result<Prediction> {
        Ok(self.predict_batch(std::slice::from_ref(image))?.remove(0))
    }

    pub fn predict_batch(&self, images: &[Tensor<f32>]) -> Result<Vec<Prediction>> {
        let logits = infer_chunked(&self.model, images, 128)?;
        Ok(logits
            .into_iter()
            .map(|z| {
                let logits: Vec<f64> = z.data().iter().map(|&v| v as f64).collect();
                let probabilities = softmax(&logits);
                Prediction {
                    label: argmax(&logits),
                    probabilities,
                    logits,
                }
            })
            .collect())
    }

    /// Saves the model under `stem` plus `{stem}.victim.json` holding the
    /// held-out accuracy.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        io::save_model(&self.model, dir, stem)?;
        let meta = VictimMeta {
            test_accuracy: self.test_accuracy,
        };
        std::fs::write(dir.join(format!("{stem}.victim.json")), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let meta: VictimMeta = crate::data::read_json(&dir.join(format!("{stem}.victim.json")))?;
        Ok(Self {
            model: io::load_model(dir, stem)?,
            test_accuracy: meta.test_accuracy,
        })
    }

    pub fn accuracy(&self, images: &[LabeledImage]) -> Result<f64> {
        if images.is_empty() {
            return Err(CoreError::Empty("evaluation set"));
        }
        let pixels: Vec<Tensor<f32>> = images.iter().map(|i| i.pixels.clone()).collect();
        let preds = self.predict_batch(&pixels)?;
        let correct = preds.iter().zip(images).filter(|(p, im)| p.label == im.label).count();
        Ok(correct as f64 / images.len() as f64)
    }

    /// Gradient of the chosen scalar with respect to the pixels, `(32, 32, 3)`.
    pub fn input_gradient(&self, image: &Tensor<f32>, label: usize, kind: LossKind) -> Result<Tensor<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (z, tape) = self.model.forward(&image.clone().batched(), Mode::Gradient, &mut rng)?;
        let dz = match kind {
            LossKind::CrossEntropy => loss::cross_entropy(&z, &[label])?.1,
            LossKind::Logit(k) => {
                if k >= z.len() {
                    return Err(CoreError::InvalidArgument(format!("class {k} out of range")));
                }
                let mut d = Tensor::zeros(z.shape().to_vec())?;
                d.data_mut()[k] = 1.0;
                d
            }
        };
        Ok(self.model.input_gradient(&tape, &dz)?.item(0)?)
    }
}

/// Trains the victim and enforces the held-out accuracy gate.
pub fn train_victim(
    train: &[LabeledImage],
    heldout: &[LabeledImage],
    config: &VictimConfig,
) -> Result<(Victim, FitReport)> {
    train_with_spec(victim_spec(), train, heldout, config)
}

/// As [`train_victim`] with an arbitrary logit-producing architecture.
pub fn train_with_spec(
    spec: ModelSpec,
    train: &[LabeledImage],
    heldout: &[LabeledImage],
    config: &VictimConfig,
) -> Result<(Victim, FitReport)> {
    if heldout.is_empty() {
        return Err(CoreError::Empty("held-out set"));
    }
    let mut model = Model::<f32>::new(spec, config.fit.seed)?;
    let report = fit(
        &mut model,
        train.len(),
        &config.fit,
        |idx| {
            let imgs: Vec<&Tensor<f32>> = idx.iter().map(|&i| &train[i].pixels).collect();
            Ok((stack(&imgs)?, Target::Classes(idx.iter().map(|&i| train[i].label).collect())))
        },
        |m| {
            let v = Victim::untrained(m.clone());
            Ok(-v.accuracy(heldout)?)
        },
    )?;
    let accuracy = -report.best_score;
    if config.fit.epochs == 0 || report.best_epoch == 0 || accuracy < config.accuracy_gate {
        return Err(CoreError::GateNotMet {
            accuracy,
            gate: config.accuracy_gate,
        });
    }
    Ok((
        Victim {
            model,
            test_accuracy: Some(accuracy),
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_composes_to_ten_logits() {
        let spec = victim_spec();
        assert_eq!(spec.output_shape().unwrap(), vec![CLASSES]);
        let shapes = spec.shapes().unwrap();
        assert!(shapes.contains(&vec![16, 16, 32]));
        assert!(shapes.contains(&vec![8, 8, 64]));
    }

    #[test]
    fn zero_model_is_uniform() {
        let v = Victim::untrained(Model::zeroed(victim_spec()).unwrap());
        let img = Tensor::full(IMAGE_SHAPE.to_vec(), 0.3f32).unwrap();
        let p = v.predict(&img).unwrap();
        assert!(p.probabilities.iter().all(|&q| (q - 0.1).abs() < 1e-12));
        let g = v.input_gradient(&img, 2, LossKind::CrossEntropy).unwrap();
        assert!(g.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn save_load_keeps_predictions_and_accuracy() {
        let v = Victim {
            model: Model::new(victim_spec(), 3).unwrap(),
            test_accuracy: Some(0.8),
        };
        let dir = tempfile::tempdir().unwrap();
        v.save(dir.path(), "victim").unwrap();
        let back = Victim::load(dir.path(), "victim").unwrap();
        assert_eq!(back.test_accuracy, Some(0.8));
        let img = Tensor::full(IMAGE_SHAPE.to_vec(), 0.4f32).unwrap();
        assert_eq!(back.predict(&img).unwrap(), v.predict(&img).unwrap());
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[101.0, 102.0, 103.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
