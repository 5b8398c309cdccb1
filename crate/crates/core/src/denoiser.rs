//! 3D convolutional denoising autoencoder mapping adversarial feature
//! stacks back toward their benign counterparts.

use std::fmt;
use std::path::Path;

use fcd_tensor::{io, loss, LayerSpec, Model, ModelSpec, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{distortion, AttackKind};
use crate::error::{CoreError, Result};
use crate::features::{Feature, FeatureStack};
use crate::metrics::{psnr, DEFAULT_PSNR_CAP};
use crate::train::{fit, infer_chunked, masked_mse, FitConfig, FitReport, Target};
use crate::victim::Victim;
use crate::{CHANNELS, IMAGE_SIDE};

/// How the last conv's output becomes the reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// `input + net(input)`: the network learns the correction, so an
    /// untrained or weakly trained model starts near the identity.
    Residual,
    /// `sigmoid(net(input))`: outputs pinned to (0, 1).
    Sigmoid,
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Head::Residual => "residual",
            Head::Sigmoid => "sigmoid",
        })
    }
}

/// Which planes the reconstruction loss covers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionLoss {
    /// MSE over every plane of the stack.
    #[default]
    FullStack,
    /// MSE over the raw image plane only; feature planes are inputs.
    ImagePlane,
}

/// Encoder conv 16@3³ → conv `mid_width`@3³ → conv `mid_width`@2³ stride
/// 2×2×1; decoder nearest upsample 2×2×1 → conv 16@3³ → conv 3@3³. ReLU
/// between convs. The strided conv pads one plane after the last along `f`
/// so the plane count is preserved; the final conv emits the 3 colour
/// channels at every plane.
pub fn denoiser_spec(planes: usize, mid_width: usize, head: Head) -> Result<ModelSpec> {
    if planes == 0 || mid_width == 0 {
        return Err(CoreError::InvalidArgument("denoiser needs planes and width".into()));
    }
    let mut layers = vec![
        LayerSpec::conv3d_same(16, [3, 3, 3]),
        LayerSpec::relu(),
        LayerSpec::conv3d_same(mid_width, [3, 3, 3]),
        LayerSpec::relu(),
        LayerSpec::conv3d(mid_width, [2, 2, 2], [2, 2, 1], [[0, 0], [0, 0], [0, 1]]),
        LayerSpec::relu(),
        LayerSpec::upsample3d([2, 2, 1]),
        LayerSpec::conv3d_same(16, [3, 3, 3]),
        LayerSpec::relu(),
        LayerSpec::conv3d_same(CHANNELS, [3, 3, 3]),
    ];
    if head == Head::Sigmoid {
        layers.push(LayerSpec::sigmoid());
    }
    Ok(ModelSpec::new(
        "denoiser",
        vec![IMAGE_SIDE, IMAGE_SIDE, planes, CHANNELS],
        layers,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub fit: FitConfig,
    pub mid_width: usize,
    pub head: Head,
    pub validation_fraction: f64,
    #[serde(default)]
    pub loss: ReconstructionLoss,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig {
                epochs: 60,
                batch_size: 16,
                learning_rate: 1e-3,
                patience: 5,
                seed: 0,
            },
            mid_width: 32,
            head: Head::Residual,
            validation_fraction: 0.1,
            loss: ReconstructionLoss::FullStack,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        self.fit.validate("denoiser")?;
        if self.mid_width == 0 {
            return Err(CoreError::InvalidArgument("denoiser mid_width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(CoreError::InvalidArgument(format!(
                "denoiser validation_fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// Training pair: the network sees `noisy` and should reproduce `clean`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoisePair {
    pub noisy: FeatureStack,
    pub clean: FeatureStack,
}

#[derive(Clone, Debug)]
pub struct Denoiser {
    pub model: Model<f32>,
    pub head: Head,
    pub feature_order: Vec<Feature>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DenoiserMeta {
    head: Head,
    feature_order: Vec<Feature>,
}

fn check_order(expected: &[Feature], stack: &FeatureStack) -> Result<()> {
    if stack.feature_order != expected {
        return Err(CoreError::FeatureOrder {
            expected: expected.iter().map(|f| f.to_string()).collect(),
            actual: stack.feature_order.iter().map(|f| f.to_string()).collect(),
        });
    }
    Ok(())
}

/// What the network itself is trained to emit for a pair.
fn target_for(head: Head, pair: &DenoisePair) -> Result<Tensor<f32>> {
    Ok(match head {
        Head::Residual => pair.clean.tensor.zip_map(&pair.noisy.tensor, |c, n| c - n)?,
        Head::Sigmoid => pair.clean.tensor.clone(),
    })
}

pub fn train_denoiser(pairs: &[DenoisePair], config: &DenoiserConfig) -> Result<(Denoiser, FitReport)> {
    config.validate()?;
    let first = pairs.first().ok_or(CoreError::Empty("denoiser training set"))?;
    let order = first.noisy.feature_order.clone();
    let spec = denoiser_spec(order.len(), config.mid_width, config.head)?;
    for p in pairs {
        check_order(&order, &p.noisy)?;
        check_order(&order, &p.clean)?;
        p.noisy.tensor.expect_shape(&spec.input_shape)?;
        p.clean.tensor.expect_shape(&spec.input_shape)?;
    }

    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(config.fit.seed ^ 0xde));
    let held = ((pairs.len() as f64 * config.validation_fraction).round() as usize).min(pairs.len() - 1);
    let (val_idx, train_idx) = idx.split_at(held);
    let monitor: Vec<usize> = if val_idx.is_empty() { train_idx } else { val_idx }.to_vec();
    let monitor_inputs: Vec<Tensor<f32>> = monitor.iter().map(|&i| pairs[i].noisy.tensor.clone()).collect();
    let monitor_targets = monitor
        .iter()
        .map(|&i| target_for(config.head, &pairs[i]))
        .collect::<Result<Vec<_>>>()?;

    // 1 on the elements the loss covers
    let mask = match config.loss {
        ReconstructionLoss::FullStack => None,
        ReconstructionLoss::ImagePlane => {
            let k = order
                .iter()
                .position(|&f| f == Feature::Image)
                .ok_or_else(|| CoreError::InvalidArgument("image-plane loss needs the image plane in the stack".into()))?;
            let planes = order.len();
            Some(Tensor::from_fn(spec.input_shape.clone(), |i| ((i / CHANNELS) % planes == k) as u8 as f32)?)
        }
    };
    let score = |o: &Tensor<f32>, t: &Tensor<f32>| -> Result<f64> {
        Ok(match &mask {
            None => loss::mse(o, t)?.0 as f64,
            Some(m) => masked_mse(o, t, m)?.0 as f64,
        })
    };

    let mut model = Model::<f32>::new(spec, config.fit.seed)?;
    if config.head == Head::Residual {
        // zero last conv: the untrained model is exactly the identity
        if let Some(last) = model.params_mut().iter_mut().rev().find(|g| !g.is_empty()) {
            last.iter_mut().for_each(|p| p.data_mut().iter_mut().for_each(|v| *v = 0.0));
        }
    }
    let report = fit(
        &mut model,
        train_idx.len(),
        &config.fit,
        |batch| {
            let inputs: Vec<Tensor<f32>> = batch.iter().map(|&b| pairs[train_idx[b]].noisy.tensor.clone()).collect();
            let targets = batch
                .iter()
                .map(|&b| target_for(config.head, &pairs[train_idx[b]]))
                .collect::<Result<Vec<_>>>()?;
            let target = Tensor::stack(&targets)?;
            let target = match &mask {
                None => Target::Dense(target),
                Some(m) => Target::Masked {
                    target,
                    mask: Tensor::stack(&vec![m.clone(); batch.len()])?,
                },
            };
            Ok((Tensor::stack(&inputs)?, target))
        },
        |m| {
            let outputs = infer_chunked(m, &monitor_inputs, 32)?;
            let mut total = 0.0;
            for (o, t) in outputs.iter().zip(&monitor_targets) {
                total += score(o, t)?;
            }
            Ok(total / monitor.len() as f64)
        },
    )?;
    Ok((
        Denoiser {
            model,
            head: config.head,
            feature_order: order,
        },
        report,
    ))
}

impl Denoiser {
    /// Reconstruction of each stack, same shape and feature order.
    pub fn denoise_batch(&self, stacks: &[FeatureStack]) -> Result<Vec<FeatureStack>> {
        for s in stacks {
            check_order(&self.feature_order, s)?;
            s.tensor.expect_shape(self.model.input_shape())?;
        }
        let inputs: Vec<Tensor<f32>> = stacks.iter().map(|s| s.tensor.clone()).collect();
        let outputs = infer_chunked(&self.model, &inputs, 32)?;
        outputs
            .into_iter()
            .zip(stacks)
            .map(|(out, s)| {
                let tensor = match self.head {
                    Head::Residual => s.tensor.zip_map(&out, |x, d| x + d)?,
                    Head::Sigmoid => out,
                };
                Ok(FeatureStack {
                    tensor,
                    feature_order: s.feature_order.clone(),
                    normalization_meta: s.normalization_meta.clone(),
                })
            })
            .collect()
    }

    pub fn denoise(&self, stack: &FeatureStack) -> Result<FeatureStack> {
        Ok(self.denoise_batch(std::slice::from_ref(stack))?.remove(0))
    }

    /// The reconstructed image plane clipped to `[0, 1]`, ready for the
    /// victim. Feature planes are discarded.
    pub fn denoised_images(&self, stacks: &[FeatureStack]) -> Result<Vec<Tensor<f32>>> {
        self.denoise_batch(stacks)?
            .iter()
            .map(|s| Ok(s.plane(Feature::Image)?.map(|v| v.clamp(0.0, 1.0))))
            .collect()
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        io::save_model(&self.model, dir, stem)?;
        let meta = DenoiserMeta {
            head: self.head,
            feature_order: self.feature_order.clone(),
        };
        std::fs::write(dir.join(format!("{stem}.denoiser.json")), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let meta: DenoiserMeta = crate::data::read_json(&dir.join(format!("{stem}.denoiser.json")))?;
        let model = io::load_model(dir, stem)?;
        if model.input_shape().get(2) != Some(&meta.feature_order.len()) {
            return Err(CoreError::InvalidArgument(format!(
                "denoiser {stem}: plane count disagrees with its feature order"
            )));
        }
        Ok(Self {
            model,
            head: meta.head,
            feature_order: meta.feature_order,
        })
    }
}

/// One adversarial example to restore.
#[derive(Clone, Debug, PartialEq)]
pub struct RestorationItem {
    pub adversarial: FeatureStack,
    pub benign: Tensor<f32>,
    pub true_label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestorationReport {
    pub attack: AttackKind,
    pub feature_order: Vec<Feature>,
    /// Share of evaluated AEs whose denoised image the victim labels correctly.
    pub restored_fraction: f64,
    /// AEs evaluated (those that fool the victim).
    pub n: usize,
    /// Items dropped because the victim already labels the AE correctly.
    pub skipped: usize,
    pub mean_psnr_before: f64,
    pub mean_psnr_after: f64,
    pub mean_l2_before: f64,
    pub mean_l2_after: f64,
}

/// Denoises every item that fools `victim` and checks whether the true
/// label comes back. Also returns the denoised images of the evaluated items.
pub fn evaluate_restoration(
    denoiser: &Denoiser,
    victim: &Victim,
    attack: AttackKind,
    items: &[RestorationItem],
) -> Result<(RestorationReport, Vec<Tensor<f32>>)> {
    restoration_report(victim, attack, &denoiser.feature_order, items, |stacks| {
        denoiser.denoised_images(stacks)
    })
}

/// [`evaluate_restoration`] for any stack-to-image map.
pub fn restoration_report(
    victim: &Victim,
    attack: AttackKind,
    feature_order: &[Feature],
    items: &[RestorationItem],
    denoise: impl FnOnce(&[FeatureStack]) -> Result<Vec<Tensor<f32>>>,
) -> Result<(RestorationReport, Vec<Tensor<f32>>)> {
    let adversarial_images = items
        .iter()
        .map(|it| it.adversarial.plane(Feature::Image))
        .collect::<Result<Vec<_>>>()?;
    let before = victim.predict_batch(&adversarial_images)?;
    let kept: Vec<usize> = (0..items.len()).filter(|&i| before[i].label != items[i].true_label).collect();
    if kept.is_empty() {
        return Err(CoreError::Empty("restoration set"));
    }
    let stacks: Vec<FeatureStack> = kept.iter().map(|&i| items[i].adversarial.clone()).collect();
    let denoised = denoise(&stacks)?;
    if denoised.len() != stacks.len() {
        return Err(CoreError::InvalidArgument(format!(
            "denoiser returned {} images for {} stacks",
            denoised.len(),
            stacks.len()
        )));
    }
    let after = victim.predict_batch(&denoised)?;
    let n = kept.len() as f64;
    let (mut restored, mut psnr_b, mut psnr_a, mut l2_b, mut l2_a) = (0usize, 0.0, 0.0, 0.0, 0.0);
    for (k, &i) in kept.iter().enumerate() {
        let item = &items[i];
        if after[k].label == item.true_label {
            restored += 1;
        }
        psnr_b += psnr(&item.benign, &adversarial_images[i], 1.0, DEFAULT_PSNR_CAP)?;
        psnr_a += psnr(&item.benign, &denoised[k], 1.0, DEFAULT_PSNR_CAP)?;
        l2_b += distortion(&adversarial_images[i], &item.benign).0;
        l2_a += distortion(&denoised[k], &item.benign).0;
    }
    let report = RestorationReport {
        attack,
        feature_order: feature_order.to_vec(),
        restored_fraction: restored as f64 / n,
        n: kept.len(),
        skipped: items.len() - kept.len(),
        mean_psnr_before: psnr_b / n,
        mean_psnr_after: psnr_a / n,
        mean_l2_before: l2_b / n,
        mean_l2_after: l2_a / n,
    };
    Ok((report, denoised))
}
