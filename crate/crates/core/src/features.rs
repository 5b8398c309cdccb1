//! Frequency-centric projections of an image and the `(x, y, f, c)` stacks
//! the detector and denoiser consume.
//!
//! Every projection works per RGB channel. MFS is the log-compressed,
//! centered DFT magnitude; PFS the centered phase; the entropy map the local
//! Shannon entropy of 8-bit intensities.

use std::f64::consts::PI;
use std::fmt;

use fcd_tensor::Tensor;
pub use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Bins weaker than this have no meaningful phase and are assigned 0.
pub const PHASE_MAGNITUDE_FLOOR: f64 = 1e-12;

/// A row-major 2D complex spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub rows: usize,
    pub cols: usize,
    pub bins: Vec<Complex64>,
}

fn fft_rows_then_cols(rows: usize, cols: usize, data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(cols), planner.plan_fft_inverse(rows))
    } else {
        (planner.plan_fft_forward(cols), planner.plan_fft_forward(rows))
    };
    for row in data.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let mut column = vec![Complex64::default(); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = data[r * cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..rows {
            data[r * cols + c] = column[r];
        }
    }
}

/// Unnormalized forward 2D DFT of a real plane.
pub fn dft2(plane: &[f64], rows: usize, cols: usize) -> Spectrum {
    assert_eq!(plane.len(), rows * cols, "plane length must be rows * cols");
    let mut bins: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_rows_then_cols(rows, cols, &mut bins, false);
    Spectrum { rows, cols, bins }
}

/// Inverse of [`dft2`], including the `1 / (rows * cols)` factor.
pub fn idft2(spectrum: &Spectrum) -> Vec<Complex64> {
    let mut data = spectrum.bins.clone();
    fft_rows_then_cols(spectrum.rows, spectrum.cols, &mut data, true);
    let scale = 1.0 / (spectrum.rows * spectrum.cols) as f64;
    data.iter_mut().for_each(|v| *v *= scale);
    data
}

/// Moves the zero-frequency bin to `(rows / 2, cols / 2)`.
pub fn fftshift<T: Copy>(data: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len());
    for r in 0..rows {
        let src_r = (r + rows - rows / 2) % rows;
        for c in 0..cols {
            let src_c = (c + cols - cols / 2) % cols;
            out.push(data[src_r * cols + src_c]);
        }
    }
    out
}

fn dims(image: &Tensor<f32>) -> Result<(usize, usize, usize)> {
    match *image.shape() {
        [x, y, c] => Ok((x, y, c)),
        _ => Err(CoreError::InvalidArgument(format!(
            "expected an (x, y, c) image, got shape {:?}",
            image.shape()
        ))),
    }
}

/// Channel `c` of an `(x, y, c)` image as a row-major f64 plane.
pub fn channel_plane(image: &Tensor<f32>, channel: usize) -> Vec<f64> {
    let c = *image.shape().last().expect("image has a channel axis");
    image.data().iter().skip(channel).step_by(c).map(|&v| v as f64).collect()
}

fn interleave(planes: &[Vec<f64>], x: usize, y: usize) -> Tensor<f64> {
    let c = planes.len();
    let mut data = vec![0.0; x * y * c];
    for (ch, plane) in planes.iter().enumerate() {
        for (i, &v) in plane.iter().enumerate() {
            data[i * c + ch] = v;
        }
    }
    Tensor::new(vec![x, y, c], data).expect("consistent dims")
}

fn per_channel(image: &Tensor<f32>, f: impl Fn(&[f64], usize, usize) -> Vec<f64>) -> Result<Tensor<f64>> {
    let (x, y, c) = dims(image)?;
    let planes: Vec<Vec<f64>> = (0..c).map(|ch| f(&channel_plane(image, ch), x, y)).collect();
    Ok(interleave(&planes, x, y))
}

/// Centered `ln(1 + |F|)` per channel, before any normalization.
pub fn log_magnitude(image: &Tensor<f32>) -> Result<Tensor<f64>> {
    per_channel(image, |plane, x, y| {
        let spectrum = dft2(plane, x, y);
        let mags: Vec<f64> = spectrum.bins.iter().map(|b| b.norm().ln_1p()).collect();
        fftshift(&mags, x, y)
    })
}

/// Phase of one bin on the branch `(-pi, pi]`, zero below the magnitude floor.
pub fn bin_phase(bin: Complex64) -> f64 {
    if bin.norm() < PHASE_MAGNITUDE_FLOOR {
        return 0.0;
    }
    let p = bin.im.atan2(bin.re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// Centered phase in radians per channel.
pub fn phase(image: &Tensor<f32>) -> Result<Tensor<f64>> {
    per_channel(image, |plane, x, y| {
        let spectrum = dft2(plane, x, y);
        let phases: Vec<f64> = spectrum.bins.iter().map(|&b| bin_phase(b)).collect();
        fftshift(&phases, x, y)
    })
}

/// An `(x, y, c)` projection scaled into `[0, 1]`, with the per-channel
/// `(min, max)` that was mapped onto `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub tensor: Tensor<f32>,
    pub meta: Vec<(f64, f64)>,
}

fn min_max_normalize(raw: &Tensor<f64>) -> Projection {
    let c = raw.shape()[2];
    let mut meta = Vec::with_capacity(c);
    let mut data = vec![0.0f32; raw.len()];
    for ch in 0..c {
        let values = raw.data().iter().skip(ch).step_by(c);
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        for (i, &v) in raw.data().iter().enumerate().skip(ch).step_by(c) {
            data[i] = if span > 0.0 { ((v - lo) / span) as f32 } else { 0.0 };
        }
        meta.push((lo, hi));
    }
    Projection {
        tensor: Tensor::new(raw.shape().to_vec(), data).expect("same shape"),
        meta,
    }
}

/// Magnitude feature: log-compressed centered spectrum, min-max scaled per
/// channel.
pub fn mfs(image: &Tensor<f32>) -> Result<Projection> {
    Ok(min_max_normalize(&log_magnitude(image)?))
}

/// Phase feature: centered phase mapped affinely from `[-pi, pi]` to `[0, 1]`.
pub fn pfs(image: &Tensor<f32>) -> Result<Projection> {
    let raw = phase(image)?;
    let c = raw.shape()[2];
    let data = raw.data().iter().map(|&p| ((p + PI) / (2.0 * PI)) as f32).collect();
    Ok(Projection {
        tensor: Tensor::new(raw.shape().to_vec(), data)?,
        meta: vec![(-PI, PI); c],
    })
}

/// 8-bit quantization followed by bucketing into `bins` equal ranges.
pub fn quantize(value: f32, bins: usize) -> usize {
    let q = (value as f64 * 255.0).round().clamp(0.0, 255.0) as usize;
    q * bins / 256
}

/// Mirror index without repeating the edge sample: -1 maps to 1.
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Shannon entropy in bits of the histogram formed by `buckets`, summed in
/// ascending bucket order.
fn sorted_entropy(buckets: &mut [usize]) -> f64 {
    buckets.sort_unstable();
    let n = buckets.len() as f64;
    let mut h = 0.0;
    let mut start = 0;
    while start < buckets.len() {
        let mut end = start + 1;
        while end < buckets.len() && buckets[end] == buckets[start] {
            end += 1;
        }
        let p = (end - start) as f64 / n;
        h -= p * p.log2();
        start = end;
    }
    h
}

/// Local entropy over a `window × window` neighborhood, divided by
/// `log2(bins)`. Edges reflect.
pub fn entropy_map(image: &Tensor<f32>, window: usize, bins: usize) -> Result<Projection> {
    if window < 3 || window % 2 == 0 {
        return Err(CoreError::InvalidArgument(format!("entropy window must be odd and >= 3, got {window}")));
    }
    if bins < 2 {
        return Err(CoreError::InvalidArgument(format!("entropy needs at least 2 bins, got {bins}")));
    }
    let (x, y, c) = dims(image)?;
    let half = window / 2;
    if half >= x || half >= y {
        return Err(CoreError::InvalidArgument(format!("window {window} too large for a {x}x{y} image")));
    }
    let norm = (bins as f64).log2();
    let q: Vec<usize> = image.data().iter().map(|&v| quantize(v, bins)).collect();
    let mut out = vec![0.0f32; q.len()];
    let mut buckets = Vec::with_capacity(window * window);
    for i in 0..x {
        for j in 0..y {
            for ch in 0..c {
                buckets.clear();
                for di in 0..window {
                    let r = reflect(i as isize + di as isize - half as isize, x);
                    for dj in 0..window {
                        let s = reflect(j as isize + dj as isize - half as isize, y);
                        buckets.push(q[(r * y + s) * c + ch]);
                    }
                }
                out[(i * y + j) * c + ch] = (sorted_entropy(&mut buckets) / norm) as f32;
            }
        }
    }
    Ok(Projection {
        tensor: Tensor::new(vec![x, y, c], out)?,
        meta: vec![(0.0, norm); c],
    })
}

/// A plane kind along the `f` axis of a stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Image,
    Entropy,
    Mfs,
    Pfs,
}

impl Feature {
    pub const PROJECTIONS: [Feature; 3] = [Feature::Entropy, Feature::Mfs, Feature::Pfs];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Image => "image",
            Feature::Entropy => "entropy",
            Feature::Mfs => "mfs",
            Feature::Pfs => "pfs",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Joins feature names with `+`, e.g. `entropy+mfs+pfs`.
pub fn order_label(order: &[Feature]) -> String {
    order.iter().map(|f| f.name()).collect::<Vec<_>>().join("+")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct FeatureParams {
    pub entropy_window: usize,
    pub entropy_bins: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            entropy_window: 5,
            entropy_bins: 256,
        }
    }
}

/// Planes stacked along the `f` axis of an `(x, y, f, c)` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    pub tensor: Tensor<f32>,
    pub feature_order: Vec<Feature>,
    /// Per plane, per channel `(min, max)` mapped onto `[0, 1]`.
    pub normalization_meta: Vec<Vec<(f64, f64)>>,
}

fn check_order(order: &[Feature]) -> Result<()> {
    if order.is_empty() {
        return Err(CoreError::Empty("feature order"));
    }
    for (i, f) in order.iter().enumerate() {
        if order[..i].contains(f) {
            return Err(CoreError::DuplicateFeature(f.to_string()));
        }
    }
    Ok(())
}

fn projection(image: &Tensor<f32>, feature: Feature, params: &FeatureParams) -> Result<Projection> {
    match feature {
        Feature::Image => Ok(Projection {
            tensor: image.clone(),
            meta: vec![(0.0, 1.0); image.shape()[2]],
        }),
        Feature::Entropy => entropy_map(image, params.entropy_window, params.entropy_bins),
        Feature::Mfs => mfs(image),
        Feature::Pfs => pfs(image),
    }
}

/// Builds the stack for `image`; with `include_image` the raw image is
/// prepended as plane 0.
pub fn build_stack(
    image: &Tensor<f32>,
    feature_order: &[Feature],
    include_image: bool,
    params: &FeatureParams,
) -> Result<FeatureStack> {
    dims(image)?;
    let mut order = Vec::with_capacity(feature_order.len() + 1);
    if include_image {
        order.push(Feature::Image);
    }
    order.extend_from_slice(feature_order);
    check_order(&order)?;
    let projections = order
        .iter()
        .map(|&f| projection(image, f, params))
        .collect::<Result<Vec<_>>>()?;
    let (planes, meta): (Vec<Tensor<f32>>, Vec<Vec<(f64, f64)>>) =
        projections.into_iter().map(|p| (p.tensor, p.meta)).unzip();
    Ok(FeatureStack {
        tensor: interleave_planes(&planes)?,
        feature_order: order,
        normalization_meta: meta,
    })
}

/// Stacks `(x, y, c)` planes into `(x, y, f, c)`.
pub fn interleave_planes(planes: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let first = planes.first().ok_or(CoreError::Empty("plane list"))?;
    let (x, y, c) = dims(first)?;
    let f = planes.len();
    let mut data = vec![0.0f32; x * y * f * c];
    for (k, plane) in planes.iter().enumerate() {
        plane.expect_shape(first.shape())?;
        for (pixel, values) in plane.data().chunks_exact(c).enumerate() {
            let dst = (pixel * f + k) * c;
            data[dst..dst + c].copy_from_slice(values);
        }
    }
    Ok(Tensor::new(vec![x, y, f, c], data)?)
}

/// Plane `k` of an `(x, y, f, c)` tensor as `(x, y, c)`.
pub fn extract_plane(stack: &Tensor<f32>, k: usize) -> Result<Tensor<f32>> {
    let [x, y, f, c] = match *stack.shape() {
        [x, y, f, c] if k < f => [x, y, f, c],
        _ => {
            return Err(CoreError::InvalidArgument(format!(
                "plane {k} out of range for stack shape {:?}",
                stack.shape()
            )))
        }
    };
    let mut data = Vec::with_capacity(x * y * c);
    for pixel in 0..x * y {
        let src = (pixel * f + k) * c;
        data.extend_from_slice(&stack.data()[src..src + c]);
    }
    Ok(Tensor::new(vec![x, y, c], data)?)
}

impl FeatureStack {
    pub fn planes(&self) -> usize {
        self.feature_order.len()
    }

    pub fn plane(&self, feature: Feature) -> Result<Tensor<f32>> {
        let k = self.position(feature)?;
        extract_plane(&self.tensor, k)
    }

    fn position(&self, feature: Feature) -> Result<usize> {
        self.feature_order
            .iter()
            .position(|&f| f == feature)
            .ok_or_else(|| CoreError::FeatureOrder {
                expected: vec![feature.to_string()],
                actual: self.feature_order.iter().map(|f| f.to_string()).collect(),
            })
    }

    /// A new stack holding only `order`'s planes, in that order.
    pub fn select(&self, order: &[Feature]) -> Result<FeatureStack> {
        check_order(order)?;
        let mut planes = Vec::with_capacity(order.len());
        let mut meta = Vec::with_capacity(order.len());
        for &f in order {
            let k = self.position(f)?;
            planes.push(extract_plane(&self.tensor, k)?);
            meta.push(self.normalization_meta[k].clone());
        }
        Ok(FeatureStack {
            tensor: interleave_planes(&planes)?,
            feature_order: order.to_vec(),
            normalization_meta: meta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(f: impl Fn(usize, usize, usize) -> f32) -> Tensor<f32> {
        Tensor::from_fn(vec![8, 8, 3], |i| f(i / 24, (i / 3) % 8, i % 3)).unwrap()
    }

    #[test]
    fn shift_centers_dc() {
        let data: Vec<usize> = (0..16).collect();
        let shifted = fftshift(&data, 4, 4);
        assert_eq!(shifted[2 * 4 + 2], 0);
        let odd: Vec<usize> = (0..9).collect();
        assert_eq!(fftshift(&odd, 3, 3)[4], 0);
    }

    #[test]
    fn constant_image_projections() {
        let img = image(|_, _, _| 0.6);
        let m = mfs(&img).unwrap();
        for (i, &v) in m.tensor.data().iter().enumerate() {
            let pixel = i / 3;
            let expected = if pixel == 4 * 8 + 4 { 1.0 } else { 0.0 };
            assert_eq!(v, expected);
        }
        let p = pfs(&img).unwrap();
        assert!(p.tensor.data().iter().all(|&v| v == 0.5));
        let e = entropy_map(&img, 5, 256).unwrap();
        assert!(e.tensor.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_real_bins_take_the_upper_branch() {
        assert_eq!(bin_phase(Complex64::new(-1.0, 0.0)), PI);
        assert_eq!(bin_phase(Complex64::new(-1.0, -0.0)), PI);
        assert_eq!(bin_phase(Complex64::new(1e-13, 0.0)), 0.0);
    }

    #[test]
    fn stack_orders_planes_and_rejects_duplicates() {
        let img = image(|x, y, c| ((x * 7 + y * 3 + c) % 11) as f32 / 10.0);
        let params = FeatureParams::default();
        let s = build_stack(&img, &Feature::PROJECTIONS, true, &params).unwrap();
        assert_eq!(s.tensor.shape(), &[8, 8, 4, 3]);
        assert_eq!(s.plane(Feature::Image).unwrap(), img);
        assert_eq!(s.plane(Feature::Mfs).unwrap(), mfs(&img).unwrap().tensor);
        let sub = s.select(&[Feature::Pfs]).unwrap();
        assert_eq!(sub.tensor.shape(), &[8, 8, 1, 3]);
        assert_eq!(sub.plane(Feature::Pfs).unwrap(), pfs(&img).unwrap().tensor);
        assert!(matches!(
            build_stack(&img, &[Feature::Mfs, Feature::Mfs], false, &params),
            Err(CoreError::DuplicateFeature(_))
        ));
    }

    #[test]
    fn entropy_rejects_bad_windows() {
        let img = image(|_, _, _| 0.0);
        assert!(entropy_map(&img, 4, 256).is_err());
        assert!(entropy_map(&img, 1, 256).is_err());
        assert!(entropy_map(&img, 3, 1).is_err());
    }
}
