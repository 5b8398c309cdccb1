//! Minibatch Adam loop shared by the victim, detector and denoiser.

use fcd_tensor::{loss, Mode, Model, OptimizerKind, OptimizerState, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
}

impl FitConfig {
    pub fn validate(&self, what: &str) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(CoreError::InvalidArgument(format!(
                "{what}: batch_size and learning_rate must be positive"
            )));
        }
        Ok(())
    }
}

/// Supervision for one minibatch; selects the loss.
pub enum Target {
    /// Softmax cross-entropy on logits.
    Classes(Vec<usize>),
    /// Binary cross-entropy on sigmoid outputs.
    Binary(Vec<f64>),
    /// Mean squared error against a tensor shaped like the output.
    Dense(Tensor<f32>),
    /// Mean squared error over the elements where `mask` is 1.
    Masked { target: Tensor<f32>, mask: Tensor<f32> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Lower is better.
    pub validation_score: f64,
}

/// Result of [`fit`]: the per-epoch curve and the epoch whose parameters
/// were kept (0 means the initial parameters).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub curve: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_score: f64,
}

fn batch_loss(output: &Tensor<f32>, target: &Target) -> Result<(f32, Tensor<f32>)> {
    Ok(match target {
        Target::Classes(labels) => loss::cross_entropy(output, labels)?,
        Target::Binary(labels) => loss::bce(output, labels)?,
        Target::Dense(t) => loss::mse(output, t)?,
        Target::Masked { target, mask } => masked_mse(output, target, mask)?,
    })
}

/// `sum(m * (a - b)^2) / sum(m)` and its gradient with respect to `a`.
pub fn masked_mse(a: &Tensor<f32>, b: &Tensor<f32>, mask: &Tensor<f32>) -> Result<(f32, Tensor<f32>)> {
    a.expect_shape(b.shape())?;
    a.expect_shape(mask.shape())?;
    let n: f64 = mask.data().iter().map(|&m| m as f64).sum();
    if n == 0.0 {
        return Err(CoreError::Empty("loss mask"));
    }
    let mut total = 0.0f64;
    let mut grad = Vec::with_capacity(a.len());
    for ((&x, &y), &m) in a.data().iter().zip(b.data()).zip(mask.data()) {
        let d = (x - y) as f64;
        total += m as f64 * d * d;
        grad.push((2.0 * m as f64 * d / n) as f32);
    }
    Ok(((total / n) as f32, Tensor::new(a.shape().to_vec(), grad)?))
}

/// Trains `model` on `n` examples. `batch` materializes the examples at the
/// given indices; `validate` scores the current model (lower is better).
/// The best-scoring parameters, including the initial ones, are restored.
pub fn fit(
    model: &mut Model<f32>,
    n: usize,
    config: &FitConfig,
    mut batch: impl FnMut(&[usize]) -> Result<(Tensor<f32>, Target)>,
    mut validate: impl FnMut(&Model<f32>) -> Result<f64>,
) -> Result<FitReport> {
    config.validate("training")?;
    if n == 0 {
        return Err(CoreError::Empty("training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = OptimizerState::new(OptimizerKind::adam(), config.learning_rate, model.params())?;
    let mut best_score = validate(model)?;
    let mut best_params = model.params().to_vec();
    let mut best_epoch = 0;
    let mut curve = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (input, target) = batch(chunk)?;
            let (output, tape) = model.forward(&input, Mode::Training, &mut rng)?;
            let (l, grad) = batch_loss(&output, &target)?;
            let grads = model.backward(&tape, &grad)?;
            optimizer.step(model.params_mut(), &grads.params)?;
            total += l as f64 * chunk.len() as f64;
        }
        let score = validate(model)?;
        curve.push(EpochLog {
            epoch,
            train_loss: total / n as f64,
            validation_score: score,
        });
        log::debug!("epoch {epoch}: train loss {:.5}, validation {score:.5}", total / n as f64);
        if score < best_score {
            best_score = score;
            best_params = model.params().to_vec();
            best_epoch = epoch;
        } else if config.patience > 0 && epoch - best_epoch >= config.patience {
            break;
        }
    }
    model.params_mut().clone_from_slice(&best_params);
    Ok(FitReport {
        curve,
        best_epoch,
        best_score,
    })
}

/// Deterministic inference in chunks, concatenated along the batch axis.
pub fn infer_chunked(model: &Model<f32>, inputs: &[Tensor<f32>], chunk: usize) -> Result<Vec<Tensor<f32>>> {
    let mut out = Vec::with_capacity(inputs.len());
    for part in inputs.chunks(chunk.max(1)) {
        let y = model.infer(&Tensor::stack(part)?)?;
        for i in 0..part.len() {
            out.push(y.item(i)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fcd_tensor::{LayerSpec, ModelSpec};

    #[test]
    fn masked_mse_matches_mse_and_ignores_masked_out_elements() {
        let a = Tensor::<f32>::from_fn(vec![2, 3], |i| i as f32 * 0.5).unwrap();
        let b = Tensor::<f32>::from_fn(vec![2, 3], |i| (i % 2) as f32).unwrap();
        let ones = Tensor::<f32>::full(vec![2, 3], 1.0).unwrap();
        let (l, g) = masked_mse(&a, &b, &ones).unwrap();
        let (l_ref, g_ref) = loss::mse(&a, &b).unwrap();
        assert!((l - l_ref).abs() < 1e-6);
        for (x, y) in g.data().iter().zip(g_ref.data()) {
            assert!((x - y).abs() < 1e-6);
        }
        let first = Tensor::<f32>::from_fn(vec![2, 3], |i| (i == 0) as u8 as f32).unwrap();
        let (l, g) = masked_mse(&a, &b, &first).unwrap();
        assert_eq!(l, 0.0); // a[0] == b[0] == 0
        assert!(g.data().iter().all(|&v| v == 0.0));
        let zeros = Tensor::<f32>::full(vec![2, 3], 0.0).unwrap();
        assert!(masked_mse(&a, &b, &zeros).is_err());
    }

    #[test]
    fn restores_best_parameters_and_is_reproducible() {
        let spec = ModelSpec::new("lin", vec![2], vec![LayerSpec::dense(1)]);
        let xs: Vec<[f32; 2]> = (0..32).map(|i| [i as f32 / 32.0, 1.0 - i as f32 / 64.0]).collect();
        let ys: Vec<f32> = xs.iter().map(|x| 2.0 * x[0] - x[1]).collect();
        let run = || {
            let mut m = Model::<f32>::new(spec.clone(), 1).unwrap();
            let cfg = FitConfig {
                epochs: 40,
                batch_size: 8,
                learning_rate: 0.05,
                patience: 0,
                seed: 3,
            };
            let data = |idx: &[usize]| -> Result<(Tensor<f32>, Target)> {
                let x = Tensor::new(vec![idx.len(), 2], idx.iter().flat_map(|&i| xs[i]).collect())?;
                let y = Tensor::new(vec![idx.len(), 1], idx.iter().map(|&i| ys[i]).collect())?;
                Ok((x, Target::Dense(y)))
            };
            let all: Vec<usize> = (0..32).collect();
            let report = fit(&mut m, 32, &cfg, data, |m| {
                let (x, t) = data(&all)?;
                let Target::Dense(t) = t else { unreachable!() };
                Ok(loss::mse(&m.infer(&x)?, &t)?.0 as f64)
            })
            .unwrap();
            (m, report)
        };
        let (a, ra) = run();
        let (b, _) = run();
        assert_eq!(a.params(), b.params());
        assert!(ra.best_score < 1e-3, "{ra:?}");
    }
}
