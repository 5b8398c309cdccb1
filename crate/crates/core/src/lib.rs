//! Adversarial-example generation and frequency-domain defenses on small
//! CIFAR-style images.
//!
//! The crate is organized the way data flows: [`data`] loads images,
//! [`victim`] trains the classifier under attack, [`attacks`] perturbs it,
//! [`features`] turns images into `(x, y, f, c)` stacks, and [`detector`] /
//! [`denoiser`] learn on those stacks. [`metrics`] scores perturbations.

pub mod attacks;
pub mod data;
pub mod denoiser;
pub mod detector;
mod error;
pub mod features;
pub mod metrics;
pub mod synthetic;
pub mod train;
pub mod victim;

pub use error::{CoreError, Result};

/// Images are 32×32 RGB throughout.
pub const IMAGE_SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const CLASSES: usize = 10;
pub const IMAGE_SHAPE: [usize; 3] = [IMAGE_SIDE, IMAGE_SIDE, CHANNELS];
