use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn sgd() -> Self {
        OptimizerKind::SgdMomentum { momentum: 0.0 }
    }
}

/// Optimizer hyperparameters plus per-parameter accumulators.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    steps: u64,
    first: Vec<Vec<Tensor<T>>>,
    second: Vec<Vec<Tensor<T>>>,
}

impl<T: Real> OptimizerState<T> {
    /// Accumulators are shaped after `params` (one group per layer).
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &[Vec<Tensor<T>>]) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(TensorError::InvalidOptimizer(format!("learning rate {learning_rate}")));
        }
        let zeros = || -> Vec<Vec<Tensor<T>>> {
            params
                .iter()
                .map(|g| g.iter().map(|p| Tensor::zeros(p.shape().to_vec()).expect("valid")).collect())
                .collect()
        };
        let second = match kind {
            OptimizerKind::Adam { .. } => zeros(),
            OptimizerKind::SgdMomentum { .. } => Vec::new(),
        };
        Ok(Self {
            kind,
            learning_rate,
            steps: 0,
            first: zeros(),
            second,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [Vec<Tensor<T>>], grads: &[Vec<Tensor<T>>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(TensorError::InvalidOptimizer("parameter group count mismatch".into()));
        }
        for (pg, gg) in params.iter().zip(grads) {
            if pg.len() != gg.len() {
                return Err(TensorError::InvalidOptimizer("parameter count mismatch".into()));
            }
            for (p, g) in pg.iter().zip(gg) {
                g.expect_shape(p.shape())?;
                g.ensure_finite("optimizer gradient")?;
            }
        }
        self.steps += 1;
        let lr = T::lit(self.learning_rate);
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                let mu = T::lit(momentum);
                for ((pg, gg), vg) in params.iter_mut().zip(grads).zip(&mut self.first) {
                    for ((p, g), v) in pg.iter_mut().zip(gg).zip(vg) {
                        for ((pi, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                            *vi = mu * *vi + gi;
                            *pi -= lr * *vi;
                        }
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let t = self.steps as i32;
                let c1 = T::lit(1.0 - beta1.powi(t));
                let c2 = T::lit(1.0 - beta2.powi(t));
                let (b1, b2, eps) = (T::lit(beta1), T::lit(beta2), T::lit(epsilon));
                for (((pg, gg), mg), vg) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
                    for (((p, g), m), v) in pg.iter_mut().zip(gg).zip(mg).zip(vg) {
                        for (((pi, &gi), mi), vi) in p
                            .data_mut()
                            .iter_mut()
                            .zip(g.data())
                            .zip(m.data_mut())
                            .zip(v.data_mut())
                        {
                            *mi = b1 * *mi + (T::one() - b1) * gi;
                            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                            let m_hat = *mi / c1;
                            let v_hat = *vi / c2;
                            *pi -= lr * m_hat / (v_hat.sqrt() + eps);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
