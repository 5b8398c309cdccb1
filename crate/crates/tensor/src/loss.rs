//! Scalar losses with their gradients with respect to the prediction.
//!
//! Batched losses average over the batch.

use crate::error::{Result, TensorError};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Predictions are clamped to `[BCE_FLOOR, 1 - BCE_FLOOR]` before the log.
pub const BCE_FLOOR: f64 = 1e-7;

fn check_label(label: f64) -> Result<()> {
    if label == 0.0 || label == 1.0 {
        Ok(())
    } else {
        Err(TensorError::InvalidLabel(label))
    }
}

/// Binary cross-entropy of a single probability.
pub fn bce_scalar(prediction: f64, label: f64) -> Result<f64> {
    check_label(label)?;
    let p = prediction.clamp(BCE_FLOOR, 1.0 - BCE_FLOOR);
    Ok(-(label * p.ln() + (1.0 - label) * (1.0 - p).ln()))
}

/// Mean binary cross-entropy over a batch of probabilities `(n, 1)` or `(n,)`.
pub fn bce<T: Real>(predictions: &Tensor<T>, labels: &[f64]) -> Result<(T, Tensor<T>)> {
    if predictions.len() != labels.len() {
        return Err(TensorError::ShapeMismatch {
            expected: vec![labels.len()],
            actual: predictions.shape().to_vec(),
        });
    }
    let n = labels.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(labels.len());
    for (&p, &y) in predictions.data().iter().zip(labels) {
        total += bce_scalar(p.as_f64(), y)?;
        let pc = p.as_f64().clamp(BCE_FLOOR, 1.0 - BCE_FLOOR);
        grad.push(T::lit((pc - y) / (pc * (1.0 - pc)) / n));
    }
    Ok((T::lit(total / n), Tensor::new(predictions.shape().to_vec(), grad)?))
}

/// Softmax cross-entropy on raw logits `(n, classes)`.
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, targets: &[usize]) -> Result<(T, Tensor<T>)> {
    let classes = *logits.shape().last().unwrap_or(&1);
    if logits.len() != classes * targets.len() {
        return Err(TensorError::ShapeMismatch {
            expected: vec![targets.len(), classes],
            actual: logits.shape().to_vec(),
        });
    }
    let n = T::lit(targets.len() as f64);
    let mut total = T::zero();
    let mut grad = vec![T::zero(); logits.len()];
    for ((row, g), &t) in logits
        .data()
        .chunks_exact(classes)
        .zip(grad.chunks_exact_mut(classes))
        .zip(targets)
    {
        if t >= classes {
            return Err(TensorError::ClassOutOfRange { index: t, classes });
        }
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[t];
        for (gi, &z) in g.iter_mut().zip(row) {
            *gi = (z - lse).exp() / n;
        }
        g[t] -= T::one() / n;
    }
    Ok((total / n, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Mean squared error over every element.
pub fn mse<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    a.expect_shape(b.shape())?;
    let n = T::lit(a.len() as f64);
    let mut total = T::zero();
    let grad = a.zip_map(b, |x, y| {
        let d = x - y;
        T::lit(2.0) * d / n
    })?;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        total += (x - y) * (x - y);
    }
    Ok((total / n, grad))
}
