//! Procedural stand-in for CIFAR-10, written in the CIFAR binary format.
//!
//! Ten shape classes drawn with random color, position, scale and
//! orientation over a smooth random background, plus pixel noise. Used when
//! the real batches are not available; the loader cannot tell the
//! difference.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use fcd_tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{encode_record, TEST_FILE, TRAIN_FILES};
use crate::error::Result;
use crate::{CHANNELS, CLASSES, IMAGE_SHAPE, IMAGE_SIDE};

pub const CLASS_NAMES: [&str; CLASSES] = [
    "disk", "square", "triangle", "ring", "cross", "hbars", "vbars", "diagonal", "checker", "pair",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Standard deviation of the additive per-pixel noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            train_per_class: 600,
            test_per_class: 100,
            noise_std: 0.03,
            seed: 0,
        }
    }
}

fn smoothstep(edge: f64, v: f64) -> f64 {
    // 1 inside (v < -edge), 0 outside (v > edge)
    let t = ((edge - v) / (2.0 * edge)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Signed "distance" of `(u, v)` (object-centered, unit radius) to the
/// class shape; negative inside.
fn shape_distance(class: usize, u: f64, v: f64) -> f64 {
    match class {
        0 => (u * u + v * v).sqrt() - 1.0,
        1 => u.abs().max(v.abs()) - 0.85,
        2 => {
            // upward triangle
            let edge1 = v - 0.8;
            let edge2 = -0.87 * u - 0.5 * v - 0.4;
            let edge3 = 0.87 * u - 0.5 * v - 0.4;
            edge1.max(edge2).max(edge3)
        }
        3 => ((u * u + v * v).sqrt() - 0.75).abs() - 0.25,
        4 => (u.abs() - 0.28).min(v.abs() - 0.28).max(u.abs().max(v.abs()) - 1.0),
        5 => {
            let stripes = ((v * 2.5 * PI).sin()).abs() - 0.5;
            stripes.max(u.abs().max(v.abs()) - 0.95)
        }
        6 => {
            let stripes = ((u * 2.5 * PI).sin()).abs() - 0.5;
            stripes.max(u.abs().max(v.abs()) - 0.95)
        }
        7 => ((u - v).abs() / 2f64.sqrt() - 0.3).max(u.abs().max(v.abs()) - 1.0),
        8 => {
            let cell = ((u * 2.0).floor() + (v * 2.0).floor()).rem_euclid(2.0);
            let inside = u.abs().max(v.abs()) - 1.0;
            if cell < 0.5 {
                inside
            } else {
                inside.max(0.2)
            }
        }
        _ => {
            let a = ((u - 0.5).powi(2) + v * v).sqrt() - 0.4;
            let b = ((u + 0.5).powi(2) + v * v).sqrt() - 0.4;
            a.min(b)
        }
    }
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    std::array::from_fn(|_| rng.gen_range(0.05..0.95))
}

/// Draws one image of `class`.
pub fn render(class: usize, noise_std: f64, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let side = IMAGE_SIDE as f64;
    let base = random_color(rng);
    // three low-frequency plane waves give the background some texture
    let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..3)
        .map(|_| {
            let fx = rng.gen_range(-2.0..2.0) * 2.0 * PI / side;
            let fy = rng.gen_range(-2.0..2.0) * 2.0 * PI / side;
            let phase = rng.gen_range(0.0..2.0 * PI);
            let amp: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.08..0.08));
            (fx, fy, phase, amp)
        })
        .collect();
    let mut fg = random_color(rng);
    // keep foreground and background distinguishable
    let contrast: f64 = fg.iter().zip(&base).map(|(a, b)| (a - b).abs()).sum();
    if contrast < 0.6 {
        fg = base.map(|b| if b > 0.5 { b - 0.45 } else { b + 0.45 });
    }
    let cx = side / 2.0 + rng.gen_range(-5.0..5.0);
    let cy = side / 2.0 + rng.gen_range(-5.0..5.0);
    let radius = rng.gen_range(7.0..11.0);
    let angle: f64 = rng.gen_range(-0.35..0.35);
    let (sa, ca) = angle.sin_cos();
    let noise = Normal::new(0.0, noise_std.max(0.0)).expect("finite std");
    let mut data = Vec::with_capacity(IMAGE_SIDE * IMAGE_SIDE * CHANNELS);
    for x in 0..IMAGE_SIDE {
        for y in 0..IMAGE_SIDE {
            let (dx, dy) = ((y as f64 + 0.5 - cy) / radius, (x as f64 + 0.5 - cx) / radius);
            let u = ca * dx + sa * dy;
            let v = -sa * dx + ca * dy;
            let alpha = smoothstep(0.08, shape_distance(class, u, v));
            for c in 0..CHANNELS {
                let mut bg = base[c];
                for (fx, fy, phase, amp) in &waves {
                    bg += amp[c] * (fx * x as f64 + fy * y as f64 + phase).cos();
                }
                let value = alpha * fg[c] + (1.0 - alpha) * bg + noise.sample(rng);
                data.push(value.clamp(0.0, 1.0) as f32);
            }
        }
    }
    Tensor::new(IMAGE_SHAPE.to_vec(), data).expect("fixed shape")
}

/// `per_class` records of each class in a seeded random order.
fn batch_bytes(per_class: usize, noise_std: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<u8>>> {
    let mut labels: Vec<usize> = (0..CLASSES).flat_map(|c| std::iter::repeat(c).take(per_class)).collect();
    rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), rng);
    labels
        .into_iter()
        .map(|label| encode_record(label, &render(label, noise_std, rng)))
        .collect()
}

/// Writes `data_batch_1..5.bin` (train records spread evenly) and
/// `test_batch.bin` into `dir`, plus `batches.meta.txt` with class names.
pub fn write_dataset(dir: &Path, config: &SyntheticConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train = batch_bytes(config.train_per_class, config.noise_std, &mut rng)?;
    let per_file = train.len().div_ceil(TRAIN_FILES.len()).max(1);
    for (i, name) in TRAIN_FILES.iter().enumerate() {
        let chunk: Vec<u8> = train.iter().skip(i * per_file).take(per_file).flatten().copied().collect();
        fs::write(dir.join(name), chunk)?;
    }
    let test: Vec<u8> = batch_bytes(config.test_per_class, config.noise_std, &mut rng)?
        .into_iter()
        .flatten()
        .collect();
    fs::write(dir.join(TEST_FILE), test)?;
    fs::write(dir.join("batches.meta.txt"), CLASS_NAMES.join("\n") + "\n")?;
    Ok(())
}
