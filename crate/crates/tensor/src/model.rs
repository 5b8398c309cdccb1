use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::layer::{Cache, CompiledLayer};
use crate::scalar::Real;
use crate::spec::ModelSpec;
use crate::tensor::Tensor;

/// Forward-pass mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// No intermediates kept; dropout is the identity.
    Inference,
    /// Intermediates kept for backward; dropout is the identity.
    Gradient,
    /// Intermediates kept; dropout active.
    Training,
}

/// Intermediates of one forward pass, consumed by [`Model::backward`].
#[derive(Clone, Debug)]
pub struct Tape<T> {
    caches: Vec<Cache<T>>,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    retained: bool,
}

impl<T> Tape<T> {
    /// Number of layers the pass went through.
    pub fn depth(&self) -> usize {
        self.caches.len()
    }
}

#[derive(Clone, Debug)]
pub struct Gradients<T> {
    /// One entry per layer, each holding that layer's parameter gradients.
    pub params: Vec<Vec<Tensor<T>>>,
    pub input: Tensor<T>,
}

/// A sequential layer stack together with its learned parameters.
#[derive(Clone, Debug)]
pub struct Model<T: Real = f32> {
    spec: ModelSpec,
    layers: Vec<CompiledLayer>,
    params: Vec<Vec<Tensor<T>>>,
}

impl<T: Real> Model<T> {
    /// Builds the model with seeded He-uniform initialization.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        let layers = compile(&spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layers.iter().map(|l| l.init_params(&mut rng)).collect();
        Ok(Self { spec, layers, params })
    }

    /// Builds the model with every parameter set to zero.
    pub fn zeroed(spec: ModelSpec) -> Result<Self> {
        let layers = compile(&spec)?;
        let params = layers
            .iter()
            .map(|l| {
                l.param_shapes()
                    .into_iter()
                    .map(|s| Tensor::zeros(s).expect("valid shape"))
                    .collect()
            })
            .collect();
        Ok(Self { spec, layers, params })
    }

    pub fn from_parts(spec: ModelSpec, params: Vec<Vec<Tensor<T>>>) -> Result<Self> {
        let layers = compile(&spec)?;
        if params.len() != layers.len() {
            return Err(TensorError::Format(format!(
                "{} parameter groups for {} layers",
                params.len(),
                layers.len()
            )));
        }
        for (layer, group) in layers.iter().zip(&params) {
            let shapes = layer.param_shapes();
            if shapes.len() != group.len() {
                return Err(TensorError::Format("parameter count mismatch".into()));
            }
            for (shape, p) in shapes.iter().zip(group) {
                p.expect_shape(shape)?;
            }
        }
        Ok(Self { spec, layers, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.spec.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers
            .last()
            .map(|l| l.out_shape.as_slice())
            .unwrap_or(&self.spec.input_shape)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Output shape (without batch axis) after the first `depth` layers.
    pub fn shape_after(&self, depth: usize) -> &[usize] {
        if depth == 0 {
            &self.spec.input_shape
        } else {
            &self.layers[depth - 1].out_shape
        }
    }

    pub fn params(&self) -> &[Vec<Tensor<T>>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<Tensor<T>>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().flatten().map(Tensor::len).sum()
    }

    /// Named parameter tensors in layer order, e.g. `layer03.conv3d.weight`.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, (layer, group)) in self.layers.iter().zip(&self.params).enumerate() {
            for (j, p) in group.iter().enumerate() {
                let role = if j == 0 { "weight" } else { "bias" };
                out.push((format!("layer{i:02}.{}.{role}", layer.kind.name()), p));
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
            params: self
                .params
                .iter()
                .map(|g| g.iter().map(Tensor::cast).collect())
                .collect(),
        }
    }

    /// Full forward pass on a batch `(n, ..input_shape)`.
    pub fn forward(&self, input: &Tensor<T>, mode: Mode, rng: &mut dyn RngCore) -> Result<(Tensor<T>, Tape<T>)> {
        self.forward_through(input, mode, rng, self.layers.len())
    }

    /// Forward pass through the first `depth` layers only.
    pub fn forward_through(
        &self,
        input: &Tensor<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
        depth: usize,
    ) -> Result<(Tensor<T>, Tape<T>)> {
        let depth = depth.min(self.layers.len());
        let shape = input.shape();
        if shape.len() != self.spec.input_shape.len() + 1 || shape[1..] != self.spec.input_shape[..] {
            let mut expected = vec![shape.first().copied().unwrap_or(1)];
            expected.extend_from_slice(&self.spec.input_shape);
            return Err(TensorError::ShapeMismatch {
                expected,
                actual: shape.to_vec(),
            });
        }
        input.ensure_finite("model input")?;
        let keep = mode != Mode::Inference;
        let train = mode == Mode::Training;
        let mut caches = Vec::with_capacity(if keep { depth } else { 0 });
        let mut x = input.clone();
        for (i, layer) in self.layers[..depth].iter().enumerate() {
            let (y, cache) = layer.forward(&self.params[i], &x, train, keep, rng)?;
            if !y.all_finite() {
                return Err(TensorError::NonFinite(format!("output of layer {i} ({})", layer.kind.name())));
            }
            if keep {
                caches.push(cache);
            }
            x = y;
        }
        let tape = Tape {
            caches,
            input_shape: shape.to_vec(),
            output_shape: x.shape().to_vec(),
            retained: keep,
        };
        Ok((x, tape))
    }

    /// Deterministic inference with dropout off.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(input, Mode::Inference, &mut rng)?.0)
    }

    /// Gradients of a scalar loss with respect to every parameter and the
    /// input, given `d loss / d output`.
    pub fn backward(&self, tape: &Tape<T>, grad_output: &Tensor<T>) -> Result<Gradients<T>> {
        self.backward_impl(tape, grad_output, true)
    }

    /// Input gradient only; skips the parameter-gradient products.
    pub fn input_gradient(&self, tape: &Tape<T>, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.backward_impl(tape, grad_output, false)?.input)
    }

    fn backward_impl(&self, tape: &Tape<T>, grad_output: &Tensor<T>, want_params: bool) -> Result<Gradients<T>> {
        if !tape.retained || tape.caches.len() > self.layers.len() {
            return Err(TensorError::MissingTape);
        }
        if grad_output.shape() != tape.output_shape.as_slice() {
            return Err(TensorError::ShapeMismatch {
                expected: tape.output_shape.clone(),
                actual: grad_output.shape().to_vec(),
            });
        }
        grad_output.ensure_finite("output gradient")?;
        let depth = tape.caches.len();
        let mut params: Vec<Vec<Tensor<T>>> = vec![Vec::new(); if want_params { self.layers.len() } else { 0 }];
        let mut g = grad_output.clone();
        for i in (0..depth).rev() {
            let (dx, dp) = self.layers[i].backward(&self.params[i], &tape.caches[i], &g, want_params)?;
            if !dx.all_finite() {
                return Err(TensorError::NonFinite(format!("gradient into layer {i}")));
            }
            if want_params {
                params[i] = dp;
            }
            g = dx;
        }
        if want_params {
            // layers beyond the tape depth get zero gradients
            for i in depth..self.layers.len() {
                params[i] = self.params[i]
                    .iter()
                    .map(|p| Tensor::zeros(p.shape().to_vec()).expect("valid shape"))
                    .collect();
            }
        }
        debug_assert_eq!(g.shape(), tape.input_shape.as_slice());
        Ok(Gradients { params, input: g })
    }
}

fn compile(spec: &ModelSpec) -> Result<Vec<CompiledLayer>> {
    let shapes = spec.shapes()?;
    spec.layers
        .iter()
        .enumerate()
        .map(|(i, l)| CompiledLayer::compile(i, l, &shapes[i]))
        .collect()
}
