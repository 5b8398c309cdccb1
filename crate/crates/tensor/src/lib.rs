//! Minimal dense-tensor and reverse-mode differentiation engine.
//!
//! Models are sequential stacks of layers described by a [`ModelSpec`].
//! Activations are channels-last: images are `(x, y, c)` and volumetric
//! inputs such as feature stacks are `(x, y, f, c)`. Every batch tensor
//! carries a leading batch axis.

mod conv;
mod error;
pub mod io;
mod layer;
pub mod loss;
mod model;
pub mod optim;
mod scalar;
mod spec;
mod tensor;

pub use error::{Result, TensorError};
pub use model::{Gradients, Mode, Model, Tape};
pub use optim::{OptimizerKind, OptimizerState};
pub use scalar::Real;
pub use spec::{LayerKind, LayerSpec, ModelSpec};
pub use tensor::Tensor;
