//! CIFAR-10 binary ingestion, the adversarial-example dataset, its
//! train/test split, and on-disk manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fcd_tensor::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{run_attack, AdversarialExample, AttackConfig, AttackKind};
use crate::error::{CoreError, Result};
use crate::features::{Feature, FeatureStack};
use crate::victim::Victim;
use crate::{CHANNELS, CLASSES, IMAGE_SHAPE, IMAGE_SIDE};

/// One label byte followed by 1024 red, 1024 green and 1024 blue bytes.
pub const RECORD_BYTES: usize = 1 + IMAGE_SIDE * IMAGE_SIDE * CHANNELS;

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    /// `(32, 32, 3)`, values in `[0, 1]`.
    pub pixels: Tensor<f32>,
    pub label: usize,
    pub id: String,
}

/// Decodes channel-planar CIFAR records into `(label, (32, 32, 3) pixels)`.
pub fn parse_records(bytes: &[u8], origin: &str) -> Result<Vec<(usize, Tensor<f32>)>> {
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(CoreError::MalformedCifar {
            path: origin.to_string(),
            reason: format!("length {} is not a multiple of {RECORD_BYTES}", bytes.len()),
        });
    }
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    bytes
        .chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0] as usize;
            if label >= CLASSES {
                return Err(CoreError::MalformedCifar {
                    path: origin.to_string(),
                    reason: format!("record {i} has label {label}"),
                });
            }
            let mut data = vec![0.0f32; plane * CHANNELS];
            for c in 0..CHANNELS {
                for p in 0..plane {
                    data[p * CHANNELS + c] = rec[1 + c * plane + p] as f32 / 255.0;
                }
            }
            Ok((label, Tensor::new(IMAGE_SHAPE.to_vec(), data)?))
        })
        .collect()
}

/// Inverse of [`parse_records`] for one image; pixels are rounded to bytes.
pub fn encode_record(label: usize, pixels: &Tensor<f32>) -> Result<Vec<u8>> {
    pixels.expect_shape(&IMAGE_SHAPE)?;
    if label >= CLASSES {
        return Err(CoreError::InvalidArgument(format!("label {label} out of range")));
    }
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let mut out = vec![0u8; RECORD_BYTES];
    out[0] = label as u8;
    for c in 0..CHANNELS {
        for p in 0..plane {
            out[1 + c * plane + p] = (pixels.data()[p * CHANNELS + c].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CifarSplit {
    Train,
    Test,
}

fn split_files(dir: &Path, split: CifarSplit) -> Result<Vec<PathBuf>> {
    let names: &[&str] = match split {
        CifarSplit::Train => &TRAIN_FILES,
        CifarSplit::Test => &[TEST_FILE],
    };
    let present: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).filter(|p| p.is_file()).collect();
    if present.is_empty() {
        return Err(CoreError::MissingFile(dir.join(names[0]).display().to_string()));
    }
    Ok(present)
}

/// Every record of a split, with ids `<file stem>:<record index>`.
pub fn load_split(dir: &Path, split: CifarSplit) -> Result<Vec<LabeledImage>> {
    let mut out = Vec::new();
    for path in split_files(dir, split)? {
        let bytes = fs::read(&path)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("batch").to_string();
        for (i, (label, pixels)) in parse_records(&bytes, &path.display().to_string())?.into_iter().enumerate() {
            out.push(LabeledImage {
                pixels,
                label,
                id: format!("{stem}:{i:05}"),
            });
        }
    }
    Ok(out)
}

/// Exactly `per_class` images of each class, drawn by a seeded shuffle and
/// returned in their original order. Images whose id is in `exclude` are
/// never drawn.
pub fn balanced_select(
    images: &[LabeledImage],
    per_class: usize,
    seed: u64,
    exclude: &std::collections::HashSet<String>,
) -> Result<Vec<LabeledImage>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    for class in 0..CLASSES {
        let mut idx: Vec<usize> = images
            .iter()
            .enumerate()
            .filter(|(_, im)| im.label == class && !exclude.contains(&im.id))
            .map(|(i, _)| i)
            .collect();
        if idx.len() < per_class {
            return Err(CoreError::NotEnoughImages {
                class,
                available: idx.len(),
                requested: per_class,
            });
        }
        idx.shuffle(&mut rng);
        chosen.extend_from_slice(&idx[..per_class]);
    }
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| images[i].clone()).collect())
}

/// Balanced selection of `per_class_count` images per class from a split.
pub fn load_cifar(dir: &Path, split: CifarSplit, per_class_count: usize, seed: u64) -> Result<Vec<LabeledImage>> {
    let all = load_split(dir, split)?;
    balanced_select(&all, per_class_count, seed, &Default::default())
}

/// A benign image that passed the confidence filter, with one result per
/// attack in the order attacks were configured.
#[derive(Clone, Debug, PartialEq)]
pub struct AeEntry {
    pub benign: LabeledImage,
    /// Victim's softmax probability of the true label.
    pub confidence: f64,
    pub attacks: Vec<AttackOutcome>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub kind: AttackKind,
    pub example: AdversarialExample,
    /// Softmax probability of the fooled class.
    pub fooled_confidence: f64,
    /// Enters this attack's detector/denoiser sets.
    pub usable: bool,
}

impl AeEntry {
    pub fn outcome(&self, kind: AttackKind) -> Option<&AttackOutcome> {
        self.attacks.iter().find(|a| a.kind == kind)
    }

    /// The adversarial example for `kind` if it fooled the victim.
    pub fn usable(&self, kind: AttackKind) -> Option<&AdversarialExample> {
        self.outcome(kind).filter(|o| o.usable).map(|o| &o.example)
    }

    pub fn all_successful(&self) -> bool {
        self.attacks.iter().all(|a| a.usable)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildLog {
    pub candidates: usize,
    pub survivors: usize,
    pub fooled: BTreeMap<AttackKind, usize>,
    pub usable: BTreeMap<AttackKind, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    pub confidence_floor: f64,
    /// When set, an example also needs this much softmax mass on the fooled
    /// class to be usable.
    pub fooled_confidence_floor: Option<f64>,
    pub attack_batch: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            confidence_floor: 0.9,
            fooled_confidence_floor: None,
            attack_batch: 32,
        }
    }
}

/// Keeps images the victim classifies correctly with probability at least
/// `confidence_floor`, then runs every attack on them. An empty survivor set
/// yields an empty dataset.
pub fn build_ae_dataset(
    images: &[LabeledImage],
    victim: &Victim,
    attacks: &[AttackConfig],
    config: &BuildConfig,
) -> Result<(Vec<AeEntry>, BuildLog)> {
    if !victim.is_trained() {
        return Err(CoreError::Untrained);
    }
    for a in attacks {
        a.validate()?;
    }
    let mut log = BuildLog {
        candidates: images.len(),
        ..Default::default()
    };
    let pixels: Vec<Tensor<f32>> = images.iter().map(|im| im.pixels.clone()).collect();
    let predictions = victim.predict_batch(&pixels)?;
    let survivors: Vec<(usize, f64)> = predictions
        .iter()
        .enumerate()
        .filter(|(i, p)| p.label == images[*i].label && p.probabilities[p.label] >= config.confidence_floor)
        .map(|(i, p)| (i, p.probabilities[p.label]))
        .collect();
    log.survivors = survivors.len();
    let mut entries: Vec<AeEntry> = survivors
        .iter()
        .map(|&(i, confidence)| AeEntry {
            benign: images[i].clone(),
            confidence,
            attacks: Vec::with_capacity(attacks.len()),
        })
        .collect();
    if entries.is_empty() {
        return Ok((entries, log));
    }
    let xs: Vec<Tensor<f32>> = entries.iter().map(|e| e.benign.pixels.clone()).collect();
    let labels: Vec<usize> = entries.iter().map(|e| e.benign.label).collect();
    for config_a in attacks {
        let started = std::time::Instant::now();
        let examples = run_attack(&victim.model, &xs, &labels, config_a, config.attack_batch)?;
        let advs: Vec<Tensor<f32>> = examples.iter().map(|e| e.pixels.clone()).collect();
        let adv_preds = victim.predict_batch(&advs)?;
        let (mut fooled, mut usable_count) = (0, 0);
        for ((entry, example), pred) in entries.iter_mut().zip(examples).zip(adv_preds) {
            let fooled_confidence = pred.probabilities[pred.label];
            let usable = example.success
                && config
                    .fooled_confidence_floor
                    .map_or(true, |floor| fooled_confidence >= floor);
            fooled += example.success as usize;
            usable_count += usable as usize;
            entry.attacks.push(AttackOutcome {
                kind: config_a.kind,
                example: example.with_source(entry.benign.id.clone()),
                fooled_confidence,
                usable,
            });
        }
        log::info!(
            "{}: fooled {fooled}/{} in {:.1}s",
            config_a.kind,
            entries.len(),
            started.elapsed().as_secs_f64()
        );
        log.fooled.insert(config_a.kind, fooled);
        log.usable.insert(config_a.kind, usable_count);
    }
    Ok((entries, log))
}

/// Seeded split of whole entries; each side keeps the input order. The
/// train side gets `round(n * ratio)` entries, clamped so neither is empty.
pub fn split_train_test<E: Clone>(entries: &[E], ratio: f64, seed: u64) -> Result<(Vec<E>, Vec<E>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CoreError::InvalidArgument(format!("split ratio {ratio} outside (0, 1)")));
    }
    if entries.len() < 2 {
        return Err(CoreError::InvalidArgument(format!("cannot split {} entries", entries.len())));
    }
    let n = entries.len();
    let n_train = ((n as f64 * ratio).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_idx = idx[..n_train].to_vec();
    let mut test_idx = idx[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((
        train_idx.into_iter().map(|i| entries[i].clone()).collect(),
        test_idx.into_iter().map(|i| entries[i].clone()).collect(),
    ))
}

// ---------------------------------------------------------------- storage

fn push_tensor(blob: &mut Vec<u8>, t: &Tensor<f32>) -> usize {
    let offset = blob.len();
    for v in t.data() {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    offset
}

fn read_tensor(blob: &[u8], offset: usize, shape: &[usize]) -> Result<Tensor<f32>> {
    let len: usize = shape.iter().product::<usize>() * 4;
    let bytes = blob
        .get(offset..offset + len)
        .ok_or_else(|| CoreError::InvalidArgument(format!("blob offset {offset} out of range")))?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Tensor::new(shape.to_vec(), data)?)
}

/// Manifest record of a plain image set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub label: usize,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageManifest {
    pub name: String,
    pub dtype: String,
    pub image_shape: Vec<usize>,
    pub blob: String,
    pub images: Vec<ImageRecord>,
}

/// Writes `<dir>/<name>.json` and `<dir>/<name>.bin`.
pub fn write_images(dir: &Path, name: &str, images: &[LabeledImage]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::new();
    let records = images
        .iter()
        .map(|im| ImageRecord {
            id: im.id.clone(),
            label: im.label,
            offset: push_tensor(&mut blob, &im.pixels),
        })
        .collect();
    let manifest = ImageManifest {
        name: name.to_string(),
        dtype: "f32le".into(),
        image_shape: IMAGE_SHAPE.to_vec(),
        blob: format!("{name}.bin"),
        images: records,
    };
    fs::write(dir.join(format!("{name}.bin")), blob)?;
    fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_images(dir: &Path, name: &str) -> Result<Vec<LabeledImage>> {
    let manifest: ImageManifest = read_json(&dir.join(format!("{name}.json")))?;
    let blob = read_file(&dir.join(&manifest.blob))?;
    manifest
        .images
        .iter()
        .map(|r| {
            Ok(LabeledImage {
                pixels: read_tensor(&blob, r.offset, &manifest.image_shape)?,
                label: r.label,
                id: r.id.clone(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub kind: AttackKind,
    pub success: bool,
    pub usable: bool,
    pub adversarial_label: usize,
    pub fooled_confidence: f64,
    pub l2_distortion: f64,
    pub linf_distortion: f64,
    pub iterations_used: usize,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub id: String,
    pub label: usize,
    pub confidence: f64,
    pub all_successful: bool,
    pub offset: usize,
    pub attacks: Vec<AttackRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeManifest {
    pub split: String,
    pub dtype: String,
    pub image_shape: Vec<usize>,
    pub blob: String,
    pub entries: Vec<EntryRecord>,
}

/// Writes one split of the adversarial dataset as `<split>.json` + `<split>.bin`.
pub fn write_ae_split(dir: &Path, split: &str, entries: &[AeEntry]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::new();
    let mut records = Vec::with_capacity(entries.len());
    for e in entries {
        let offset = push_tensor(&mut blob, &e.benign.pixels);
        let attacks = e
            .attacks
            .iter()
            .map(|a| AttackRecord {
                kind: a.kind,
                success: a.example.success,
                usable: a.usable,
                adversarial_label: a.example.adversarial_label,
                fooled_confidence: a.fooled_confidence,
                l2_distortion: a.example.l2_distortion,
                linf_distortion: a.example.linf_distortion,
                iterations_used: a.example.iterations_used,
                offset: push_tensor(&mut blob, &a.example.pixels),
            })
            .collect();
        records.push(EntryRecord {
            id: e.benign.id.clone(),
            label: e.benign.label,
            confidence: e.confidence,
            all_successful: e.all_successful(),
            offset,
            attacks,
        });
    }
    let manifest = AeManifest {
        split: split.to_string(),
        dtype: "f32le".into(),
        image_shape: IMAGE_SHAPE.to_vec(),
        blob: format!("{split}.bin"),
        entries: records,
    };
    fs::write(dir.join(format!("{split}.bin")), blob)?;
    fs::write(dir.join(format!("{split}.json")), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_ae_split(dir: &Path, split: &str) -> Result<Vec<AeEntry>> {
    let manifest: AeManifest = read_json(&dir.join(format!("{split}.json")))?;
    let blob = read_file(&dir.join(&manifest.blob))?;
    let shape = &manifest.image_shape;
    manifest
        .entries
        .iter()
        .map(|r| {
            let benign = LabeledImage {
                pixels: read_tensor(&blob, r.offset, shape)?,
                label: r.label,
                id: r.id.clone(),
            };
            let attacks = r
                .attacks
                .iter()
                .map(|a| {
                    Ok(AttackOutcome {
                        kind: a.kind,
                        example: AdversarialExample {
                            pixels: read_tensor(&blob, a.offset, shape)?,
                            source_id: r.id.clone(),
                            true_label: r.label,
                            adversarial_label: a.adversarial_label,
                            success: a.success,
                            l2_distortion: a.l2_distortion,
                            linf_distortion: a.linf_distortion,
                            iterations_used: a.iterations_used,
                        },
                        fooled_confidence: a.fooled_confidence,
                        usable: a.usable,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AeEntry {
                benign,
                confidence: r.confidence,
                attacks,
            })
        })
        .collect()
}

/// A stored feature stack: the benign image's (`source` = `None`) or one
/// attack's.
#[derive(Clone, Debug, PartialEq)]
pub struct StackEntry {
    pub id: String,
    pub label: usize,
    pub source: Option<AttackKind>,
    /// Whether the adversarial example fooled the victim; always true for
    /// benign stacks.
    pub usable: bool,
    pub stack: FeatureStack,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackRecord {
    pub id: String,
    pub label: usize,
    pub source: Option<AttackKind>,
    pub usable: bool,
    pub normalization_meta: Vec<Vec<(f64, f64)>>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    pub name: String,
    pub dtype: String,
    pub stack_shape: Vec<usize>,
    pub feature_order: Vec<Feature>,
    pub blob: String,
    pub records: Vec<StackRecord>,
}

/// Writes `<dir>/<name>.json` and `<dir>/<name>.bin`. All stacks must share
/// one feature order and shape.
pub fn write_stacks(dir: &Path, name: &str, entries: &[StackEntry]) -> Result<()> {
    let first = entries.first().ok_or(CoreError::Empty("stack set"))?;
    let order = first.stack.feature_order.clone();
    let shape = first.stack.tensor.shape().to_vec();
    fs::create_dir_all(dir)?;
    let mut blob = Vec::new();
    let mut records = Vec::with_capacity(entries.len());
    for e in entries {
        if e.stack.feature_order != order {
            return Err(CoreError::FeatureOrder {
                expected: order.iter().map(|f| f.to_string()).collect(),
                actual: e.stack.feature_order.iter().map(|f| f.to_string()).collect(),
            });
        }
        e.stack.tensor.expect_shape(&shape)?;
        records.push(StackRecord {
            id: e.id.clone(),
            label: e.label,
            source: e.source,
            usable: e.usable,
            normalization_meta: e.stack.normalization_meta.clone(),
            offset: push_tensor(&mut blob, &e.stack.tensor),
        });
    }
    let manifest = StackManifest {
        name: name.to_string(),
        dtype: "f32le".into(),
        stack_shape: shape,
        feature_order: order,
        blob: format!("{name}.bin"),
        records,
    };
    fs::write(dir.join(format!("{name}.bin")), blob)?;
    fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_stacks(dir: &Path, name: &str) -> Result<Vec<StackEntry>> {
    let manifest: StackManifest = read_json(&dir.join(format!("{name}.json")))?;
    let blob = read_file(&dir.join(&manifest.blob))?;
    manifest
        .records
        .into_iter()
        .map(|r| {
            Ok(StackEntry {
                stack: FeatureStack {
                    tensor: read_tensor(&blob, r.offset, &manifest.stack_shape)?,
                    feature_order: manifest.feature_order.clone(),
                    normalization_meta: r.normalization_meta,
                },
                id: r.id,
                label: r.label,
                source: r.source,
                usable: r.usable,
            })
        })
        .collect()
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CoreError::MissingFile(path.display().to_string()),
        _ => e.into(),
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read_file(path)?)?)
}

/// Saves `(x, y, 3)` images side by side as one PNG strip with a 2-pixel
/// gap. Values are clamped to `[0, 1]`.
pub fn save_png_strip(path: &Path, images: &[&Tensor<f32>]) -> Result<()> {
    let first = images.first().ok_or(CoreError::Empty("image strip"))?;
    let (h, w) = match *first.shape() {
        [h, w, 3] => (h, w),
        [h, w, 1] => (h, w),
        _ => return Err(CoreError::InvalidArgument(format!("cannot render shape {:?}", first.shape()))),
    };
    let gap = 2;
    let width = images.len() * w + (images.len() - 1) * gap;
    let mut canvas = image::RgbImage::from_pixel(width as u32, h as u32, image::Rgb([255, 255, 255]));
    for (k, img) in images.iter().enumerate() {
        img.expect_shape(first.shape())?;
        let c = img.shape()[2];
        for x in 0..h {
            for y in 0..w {
                let px: [u8; 3] = std::array::from_fn(|ch| {
                    let v = img.data()[(x * w + y) * c + ch.min(c - 1)];
                    (v.clamp(0.0, 1.0) * 255.0).round() as u8
                });
                canvas.put_pixel((k * (w + gap) + y) as u32, x as u32, image::Rgb(px));
            }
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    canvas.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_255_record_decodes_to_ones() {
        let mut rec = vec![255u8; RECORD_BYTES];
        rec[0] = 3;
        let parsed = parse_records(&rec, "mem").unwrap();
        assert_eq!(parsed[0].0, 3);
        assert!(parsed[0].1.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn truncated_and_bad_labels_are_rejected() {
        assert!(parse_records(&[0u8; RECORD_BYTES - 1], "mem").is_err());
        let mut rec = vec![0u8; RECORD_BYTES];
        rec[0] = 10;
        assert!(parse_records(&rec, "mem").is_err());
    }

    #[test]
    fn record_round_trip_is_channel_planar() {
        let px = Tensor::from_fn(IMAGE_SHAPE.to_vec(), |i| ((i * 7) % 256) as f32 / 255.0).unwrap();
        let rec = encode_record(4, &px).unwrap();
        // first red byte is pixel (0,0) channel 0, first green byte is channel 1
        assert_eq!(rec[1], 0);
        assert_eq!(rec[1 + 1024], 7);
        let back = parse_records(&rec, "mem").unwrap();
        assert_eq!(back[0].1, px);
    }

    #[test]
    fn stacks_round_trip() {
        use crate::features::{build_stack, FeatureParams};
        let img = Tensor::from_fn(IMAGE_SHAPE.to_vec(), |i| (i % 17) as f32 / 16.0).unwrap();
        let stack = build_stack(&img, &[Feature::Mfs, Feature::Pfs], true, &FeatureParams::default()).unwrap();
        let entries = vec![
            StackEntry {
                id: "a".into(),
                label: 2,
                source: None,
                usable: true,
                stack: stack.clone(),
            },
            StackEntry {
                id: "a".into(),
                label: 2,
                source: Some(AttackKind::Cw),
                usable: false,
                stack,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        write_stacks(dir.path(), "s", &entries).unwrap();
        assert_eq!(read_stacks(dir.path(), "s").unwrap(), entries);
        assert!(write_stacks(dir.path(), "e", &[]).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let items: Vec<usize> = (0..10).collect();
        let (a, b) = split_train_test(&items, 0.7, 1).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        assert_eq!(split_train_test(&items, 0.7, 1).unwrap(), (a, b));
        assert!(split_train_test(&items[..1], 0.7, 1).is_err());
        assert!(split_train_test(&items, 1.0, 1).is_err());
    }
}
