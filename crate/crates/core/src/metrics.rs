//! Perturbation magnitude and image-similarity measures.

use fcd_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::attacks::AttackKind;
use crate::error::{CoreError, Result};
use crate::features;

fn same_shape<A, B>(a: &Tensor<A>, b: &Tensor<B>) -> Result<()>
where
    A: fcd_tensor::Real,
    B: fcd_tensor::Real,
{
    if a.shape() != b.shape() {
        return Err(CoreError::Metric(format!("shape {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `sum |adv - benign| / sum benign`.
pub fn delta_ratio(benign: &Tensor<f32>, adversarial: &Tensor<f32>) -> Result<f64> {
    same_shape(benign, adversarial)?;
    let total: f64 = benign.data().iter().map(|&v| v as f64).sum();
    if total == 0.0 {
        return Err(CoreError::Metric("delta ratio of an all-zero image".into()));
    }
    let diff: f64 = benign
        .data()
        .iter()
        .zip(adversarial.data())
        .map(|(&a, &b)| (b as f64 - a as f64).abs())
        .sum();
    Ok(diff / total)
}

pub fn cosine_similarity<T: fcd_tensor::Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    same_shape(a, b)?;
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x.as_f64(), y.as_f64());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(CoreError::Metric("cosine similarity of a zero vector".into()));
    }
    // sqrt(s * s) == s exactly, so identical inputs give exactly 1
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

pub const DEFAULT_PSNR_CAP: f64 = 100.0;

/// Peak signal-to-noise ratio in dB, `cap` when the inputs are identical.
pub fn psnr<T: fcd_tensor::Real>(a: &Tensor<T>, b: &Tensor<T>, max_value: f64, cap: f64) -> Result<f64> {
    same_shape(a, b)?;
    if max_value <= 0.0 {
        return Err(CoreError::Metric(format!("psnr max value must be positive, got {max_value}")));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x.as_f64() - y.as_f64()).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(cap);
    }
    Ok((20.0 * (max_value / mse.sqrt()).log10()).min(cap))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct SsimParams {
    pub window: usize,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 8,
            dynamic_range: 1.0,
        }
    }
}

/// Summed-area table with a zero first row and column.
fn integral(values: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let w = cols + 1;
    let mut t = vec![0.0; (rows + 1) * w];
    for r in 0..rows {
        let mut run = 0.0;
        for c in 0..cols {
            run += values[r * cols + c];
            t[(r + 1) * w + c + 1] = t[r * w + c + 1] + run;
        }
    }
    t
}

fn window_sum(t: &[f64], cols: usize, r: usize, c: usize, k: usize) -> f64 {
    let w = cols + 1;
    t[(r + k) * w + c + k] - t[r * w + c + k] - t[(r + k) * w + c] + t[r * w + c]
}

/// Mean SSIM over all valid `window × window` positions of two planes,
/// uniform weights, population statistics.
pub fn ssim_plane(a: &[f64], b: &[f64], rows: usize, cols: usize, params: &SsimParams) -> Result<f64> {
    let k = params.window;
    if a.len() != rows * cols || b.len() != rows * cols {
        return Err(CoreError::Metric("plane length does not match dims".into()));
    }
    if k == 0 || k > rows || k > cols {
        return Err(CoreError::Metric(format!("ssim window {k} larger than {rows}x{cols} plane")));
    }
    let c1 = (0.01 * params.dynamic_range).powi(2);
    let c2 = (0.03 * params.dynamic_range).powi(2);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let [ta, tb, taa, tbb, tab] = [a, b, &aa[..], &bb[..], &ab[..]].map(|v| integral(v, rows, cols));
    let n = (k * k) as f64;
    let mut total = 0.0;
    let positions = (rows - k + 1) * (cols - k + 1);
    for r in 0..=rows - k {
        for c in 0..=cols - k {
            let mu_a = window_sum(&ta, cols, r, c, k) / n;
            let mu_b = window_sum(&tb, cols, r, c, k) / n;
            let var_a = window_sum(&taa, cols, r, c, k) / n - mu_a * mu_a;
            let var_b = window_sum(&tbb, cols, r, c, k) / n - mu_b * mu_b;
            let cov = window_sum(&tab, cols, r, c, k) / n - mu_a * mu_b;
            // for a == b both factors match term for term, so this is x / x
            total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        }
    }
    Ok(total / positions as f64)
}

/// SSIM of `(x, y)` or `(x, y, c)` tensors; multichannel is the channel mean.
pub fn ssim<T: fcd_tensor::Real>(a: &Tensor<T>, b: &Tensor<T>, params: &SsimParams) -> Result<f64> {
    same_shape(a, b)?;
    let (rows, cols, channels) = match *a.shape() {
        [x, y] => (x, y, 1),
        [x, y, c] => (x, y, c),
        _ => return Err(CoreError::Metric(format!("ssim needs 2D or 3D input, got {:?}", a.shape()))),
    };
    let mut total = 0.0;
    for ch in 0..channels {
        let pa: Vec<f64> = a.data().iter().skip(ch).step_by(channels).map(|v| v.as_f64()).collect();
        let pb: Vec<f64> = b.data().iter().skip(ch).step_by(channels).map(|v| v.as_f64()).collect();
        total += ssim_plane(&pa, &pb, rows, cols, params)?;
    }
    Ok(total / channels as f64)
}

pub const DEFAULT_ERGAS_RATIO: f64 = 4.0;

/// `100 * ratio * sqrt(mean_b(RMSE_b^2 / mean_b^2))` over the last axis.
pub fn ergas<T: fcd_tensor::Real>(reference: &Tensor<T>, test: &Tensor<T>, ratio: f64) -> Result<f64> {
    same_shape(reference, test)?;
    let bands = *reference.shape().last().ok_or_else(|| CoreError::Metric("scalar input".into()))?;
    let per_band = reference.len() / bands;
    let mut acc = 0.0;
    for band in 0..bands {
        let r = reference.data().iter().skip(band).step_by(bands);
        let t = test.data().iter().skip(band).step_by(bands);
        let (mut sum, mut sq) = (0.0, 0.0);
        for (&x, &y) in r.zip(t) {
            sum += x.as_f64();
            sq += (x.as_f64() - y.as_f64()).powi(2);
        }
        let mean = sum / per_band as f64;
        if mean == 0.0 {
            return Err(CoreError::Metric(format!("band {band} has zero mean")));
        }
        acc += (sq / per_band as f64) / (mean * mean);
    }
    Ok(100.0 * ratio * (acc / bands as f64).sqrt())
}

/// Which representation of a benign/adversarial pair is compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entity {
    Original,
    Mfs,
    Pfs,
}

impl Entity {
    pub const ALL: [Entity; 3] = [Entity::Original, Entity::Mfs, Entity::Pfs];

    pub fn name(self) -> &'static str {
        match self {
            Entity::Original => "original",
            Entity::Mfs => "mfs",
            Entity::Pfs => "pfs",
        }
    }

    /// Un-normalized plane used for comparisons: pixels, centered
    /// log-magnitude, or centered phase shifted by pi into `[0, 2pi]`.
    ///
    /// The shift keeps per-band means away from zero so ERGAS is defined;
    /// it changes neither PSNR nor phase differences.
    pub fn representation(self, image: &Tensor<f32>) -> Result<Tensor<f64>> {
        match self {
            Entity::Original => Ok(image.cast()),
            Entity::Mfs => features::log_magnitude(image),
            Entity::Pfs => Ok(features::phase(image)?.map(|p| p + std::f64::consts::PI)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct SimilarityParams {
    pub psnr_cap: f64,
    pub ssim: SsimParams,
    pub ergas_ratio: f64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            psnr_cap: DEFAULT_PSNR_CAP,
            ssim: SsimParams::default(),
            ergas_ratio: DEFAULT_ERGAS_RATIO,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub entity: Entity,
    pub attack: AttackKind,
    pub pairs: usize,
    pub cosine: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub ergas: f64,
}

/// Peak of a representation for PSNR: 1 for pixels, the larger of the two
/// planes' maxima for spectra.
fn peak(entity: Entity, a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    match entity {
        Entity::Original => 1.0,
        _ => a.data().iter().chain(b.data()).fold(0.0f64, |m, &v| m.max(v.abs())).max(f64::MIN_POSITIVE),
    }
}

/// Metrics for one entity of one pair: `(cosine, psnr, ssim, ergas)`.
pub fn pair_scores(
    entity: Entity,
    benign: &Tensor<f32>,
    adversarial: &Tensor<f32>,
    params: &SimilarityParams,
) -> Result<[f64; 4]> {
    let a = entity.representation(benign)?;
    let b = entity.representation(adversarial)?;
    let peak = peak(entity, &a, &b);
    let ssim_params = SsimParams {
        dynamic_range: if entity == Entity::Original { params.ssim.dynamic_range } else { peak },
        ..params.ssim
    };
    Ok([
        cosine_similarity(&a, &b)?,
        psnr(&a, &b, peak, params.psnr_cap)?,
        ssim(&a, &b, &ssim_params)?,
        ergas(&a, &b, params.ergas_ratio)?,
    ])
}

/// Averages each metric over `pairs` for every entity.
pub fn similarity_rows(
    attack: AttackKind,
    pairs: &[(&Tensor<f32>, &Tensor<f32>)],
    params: &SimilarityParams,
) -> Result<Vec<SimilarityRow>> {
    if pairs.is_empty() {
        return Err(CoreError::Empty("similarity pool"));
    }
    let mut rows = Vec::with_capacity(Entity::ALL.len());
    for entity in Entity::ALL {
        let mut sums = [0.0; 4];
        for (benign, adv) in pairs {
            let s = pair_scores(entity, benign, adv, params)?;
            for (acc, v) in sums.iter_mut().zip(s) {
                *acc += v;
            }
        }
        let n = pairs.len() as f64;
        rows.push(SimilarityRow {
            entity,
            attack,
            pairs: pairs.len(),
            cosine: sums[0] / n,
            psnr: sums[1] / n,
            ssim: sums[2] / n,
            ergas: sums[3] / n,
        });
    }
    Ok(rows)
}

/// Full table: one row per `(entity, attack)`, entity-major like the
/// published layout.
pub fn similarity_table(
    pools: &[(AttackKind, Vec<(&Tensor<f32>, &Tensor<f32>)>)],
    params: &SimilarityParams,
) -> Result<Vec<SimilarityRow>> {
    let mut rows = Vec::new();
    for (attack, pairs) in pools {
        rows.extend(similarity_rows(*attack, pairs, params)?);
    }
    rows.sort_by_key(|r| (r.entity, r.attack));
    Ok(rows)
}

pub fn similarity_csv(rows: &[SimilarityRow]) -> String {
    let mut out = String::from("entity,attack,pairs,cosine,psnr,ssim,ergas\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.4},{:.6},{:.4}\n",
            r.entity.name(),
            r.attack,
            r.pairs,
            r.cosine,
            r.psnr,
            r.ssim,
            r.ergas
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStat {
    pub attack: AttackKind,
    pub pairs: usize,
    pub delta: f64,
}

/// Pool-averaged delta ratio.
pub fn perturbation_stat(attack: AttackKind, pairs: &[(&Tensor<f32>, &Tensor<f32>)]) -> Result<PerturbationStat> {
    if pairs.is_empty() {
        return Err(CoreError::Empty("perturbation pool"));
    }
    let mut total = 0.0;
    for (b, a) in pairs {
        total += delta_ratio(b, a)?;
    }
    Ok(PerturbationStat {
        attack,
        pairs: pairs.len(),
        delta: total / pairs.len() as f64,
    })
}
