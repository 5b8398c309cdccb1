//! White-box attacks against a logit-producing classifier: FGSM, PGD,
//! DeepFool and Carlini-Wagner L2.
//!
//! Every attack takes a [`Model`] whose output is the `(n, classes)` logit
//! matrix (no softmax), images with pixels in `[0, 1]`, and the labels to
//! move away from. All are untargeted and deterministic.

use std::fmt;

use fcd_tensor::{loss, Mode, Model, Real, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Fgsm,
    Pgd,
    Deepfool,
    Cw,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [AttackKind::Fgsm, AttackKind::Pgd, AttackKind::Deepfool, AttackKind::Cw];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Pgd => "pgd",
            AttackKind::Deepfool => "deepfool",
            AttackKind::Cw => "cw",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AttackKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CoreError::InvalidArgument(format!("unknown attack {s:?}")))
    }
}

/// Hyperparameters for all four attacks; each kind reads only its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// L-infinity budget for FGSM and PGD.
    pub epsilon: f64,
    pub pgd_steps: usize,
    pub pgd_step_size: f64,
    /// Iteration cap for DeepFool and CW.
    pub max_iterations: usize,
    pub overshoot: f64,
    /// CW trade-off between distance and misclassification.
    pub c: f64,
    pub cw_learning_rate: f64,
    pub confidence_kappa: f64,
    /// Stop CW once the objective stalls over a tenth of the iteration cap.
    pub cw_abort_early: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::Fgsm,
            epsilon: 0.03,
            pgd_steps: 10,
            pgd_step_size: 0.03 / 4.0,
            max_iterations: 1000,
            overshoot: 0.02,
            c: 1.0,
            cw_learning_rate: 0.01,
            confidence_kappa: 0.0,
            cw_abort_early: true,
        }
    }
}

impl AttackConfig {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::InvalidArgument(format!("{} config: {msg}", self.kind)));
        match self.kind {
            AttackKind::Fgsm | AttackKind::Pgd if !(self.epsilon >= 0.0) => bad(format!("epsilon {}", self.epsilon)),
            AttackKind::Pgd if self.pgd_steps == 0 || !(self.pgd_step_size > 0.0) => {
                bad("pgd_steps and pgd_step_size must be positive".into())
            }
            AttackKind::Pgd if self.pgd_step_size * self.pgd_steps as f64 + 1e-12 < self.epsilon => {
                bad("pgd_step_size * pgd_steps must reach epsilon".into())
            }
            AttackKind::Deepfool | AttackKind::Cw if self.max_iterations == 0 => bad("max_iterations must be >= 1".into()),
            AttackKind::Deepfool if !(self.overshoot >= 0.0) => bad(format!("overshoot {}", self.overshoot)),
            AttackKind::Cw if !(self.c >= 0.0) || !(self.cw_learning_rate > 0.0) || !(self.confidence_kappa >= 0.0) => {
                bad("c, cw_learning_rate and confidence_kappa must be non-negative (lr positive)".into())
            }
            _ => Ok(()),
        }
    }
}

/// A perturbed image with its bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialExample<T: Real = f32> {
    pub pixels: Tensor<T>,
    pub source_id: String,
    pub true_label: usize,
    pub adversarial_label: usize,
    pub success: bool,
    pub l2_distortion: f64,
    pub linf_distortion: f64,
    pub iterations_used: usize,
}

/// `(l2, linf)` distance between two equally shaped tensors.
pub fn distortion<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> (f64, f64) {
    let (mut sq, mut max) = (0.0f64, 0.0f64);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = (x.as_f64() - y.as_f64()).abs();
        sq += d * d;
        max = max.max(d);
    }
    (sq.sqrt(), max)
}

impl<T: Real> AdversarialExample<T> {
    fn assemble(
        model: &Model<T>,
        source: &Tensor<T>,
        pixels: Tensor<T>,
        true_label: usize,
        iterations_used: usize,
    ) -> Result<Self> {
        let adversarial_label = predict_labels(model, std::slice::from_ref(&pixels))?[0];
        let (l2, linf) = distortion(&pixels, source);
        Ok(Self {
            pixels,
            source_id: String::new(),
            true_label,
            adversarial_label,
            success: adversarial_label != true_label,
            l2_distortion: l2,
            linf_distortion: linf,
            iterations_used,
        })
    }

    pub fn with_source(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }
}

/// Index of the first maximum.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn classes<T: Real>(model: &Model<T>) -> usize {
    model.output_shape().iter().product()
}

/// Logits of a batch of images.
pub fn logits<T: Real>(model: &Model<T>, images: &[Tensor<T>]) -> Result<Tensor<T>> {
    Ok(model.infer(&Tensor::stack(images)?)?)
}

pub fn predict_labels<T: Real>(model: &Model<T>, images: &[Tensor<T>]) -> Result<Vec<usize>> {
    let z = logits(model, images)?;
    Ok(z.data().chunks_exact(classes(model)).map(argmax).collect())
}

/// Forward pass that keeps the tape; returns `(logits, tape)`.
fn forward_tape<T: Real>(model: &Model<T>, batch: &Tensor<T>) -> Result<(Tensor<T>, fcd_tensor::Tape<T>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(model.forward(batch, Mode::Gradient, &mut rng)?)
}

/// Per-image input gradient of the softmax cross-entropy at `labels`.
fn cross_entropy_gradients<T: Real>(model: &Model<T>, images: &[Tensor<T>], labels: &[usize]) -> Result<Vec<Tensor<T>>> {
    let batch = Tensor::stack(images)?;
    let (z, tape) = forward_tape(model, &batch)?;
    let (_, dz) = loss::cross_entropy(&z, labels)?;
    // undo the batch mean so each image sees its own loss gradient
    let dz = dz.scale(T::lit(images.len() as f64));
    let g = model.input_gradient(&tape, &dz)?;
    (0..images.len()).map(|i| Ok(g.item(i)?)).collect()
}

fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn clip01<T: Real>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

fn check_batch<T: Real>(images: &[Tensor<T>], labels: &[usize]) -> Result<()> {
    if images.len() != labels.len() {
        return Err(CoreError::InvalidArgument(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Fast gradient sign method: `clip(x + eps * sign(grad), 0, 1)`.
pub fn fgsm_batch<T: Real>(
    model: &Model<T>,
    images: &[Tensor<T>],
    labels: &[usize],
    config: &AttackConfig,
) -> Result<Vec<AdversarialExample<T>>> {
    check_batch(images, labels)?;
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let eps = T::lit(config.epsilon);
    let grads = cross_entropy_gradients(model, images, labels)?;
    images
        .iter()
        .zip(&grads)
        .zip(labels)
        .map(|((x, g), &label)| {
            let adv = x.zip_map(g, |v, d| clip01(v + eps * sign(d)))?;
            AdversarialExample::assemble(model, x, adv, label, 1)
        })
        .collect()
}

pub fn fgsm<T: Real>(model: &Model<T>, image: &Tensor<T>, label: usize, config: &AttackConfig) -> Result<AdversarialExample<T>> {
    Ok(fgsm_batch(model, std::slice::from_ref(image), &[label], config)?.remove(0))
}

/// Projected gradient descent: repeated signed steps of `pgd_step_size`,
/// each clipped to `[0, 1]` and projected onto the L-infinity ball of
/// radius `epsilon` around the source. No random start.
pub fn pgd_batch<T: Real>(
    model: &Model<T>,
    images: &[Tensor<T>],
    labels: &[usize],
    config: &AttackConfig,
) -> Result<Vec<AdversarialExample<T>>> {
    check_batch(images, labels)?;
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let eps = T::lit(config.epsilon);
    let alpha = T::lit(config.pgd_step_size);
    let mut current: Vec<Tensor<T>> = images.to_vec();
    for _ in 0..config.pgd_steps {
        let grads = cross_entropy_gradients(model, &current, labels)?;
        for ((x, g), x0) in current.iter_mut().zip(&grads).zip(images) {
            for ((v, &d), &o) in x.data_mut().iter_mut().zip(g.data()).zip(x0.data()) {
                let stepped = clip01(*v + alpha * sign(d));
                *v = stepped.max(o - eps).min(o + eps);
            }
        }
    }
    current
        .into_iter()
        .zip(images)
        .zip(labels)
        .map(|((adv, x0), &label)| AdversarialExample::assemble(model, x0, adv, label, config.pgd_steps))
        .collect()
}

pub fn pgd<T: Real>(model: &Model<T>, image: &Tensor<T>, label: usize, config: &AttackConfig) -> Result<AdversarialExample<T>> {
    Ok(pgd_batch(model, std::slice::from_ref(image), &[label], config)?.remove(0))
}

/// Gradients of every logit with respect to the input, from one tape.
fn logit_jacobian<T: Real>(model: &Model<T>, x: &Tensor<T>) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let (z, tape) = forward_tape(model, &x.clone().batched())?;
    let k = z.len();
    let mut rows = Vec::with_capacity(k);
    for class in 0..k {
        let mut onehot = Tensor::zeros(z.shape().to_vec())?;
        onehot.data_mut()[class] = T::one();
        let g = model.input_gradient(&tape, &onehot)?;
        rows.push(g.data().iter().map(|v| v.as_f64()).collect());
    }
    Ok((z.data().iter().map(|v| v.as_f64()).collect(), rows))
}

/// Multi-class DeepFool. Each iteration linearizes the logit differences to
/// every other class, steps onto the nearest linearized boundary, and the
/// accumulated step (scaled by `1 + overshoot`) is re-evaluated until the
/// label changes. The accumulated step itself is never clipped; the point
/// that is linearized and tested is its `[0, 1]` clip, which is also what is
/// returned, so a flip the clip would undo does not end the search.
pub fn deepfool<T: Real>(model: &Model<T>, image: &Tensor<T>, label: usize, config: &AttackConfig) -> Result<AdversarialExample<T>> {
    let x0: Vec<f64> = image.data().iter().map(|v| v.as_f64()).collect();
    let mut total = vec![0.0f64; x0.len()];
    let scale = 1.0 + config.overshoot;
    let perturbed = |total: &[f64]| -> Result<Tensor<T>> {
        Ok(Tensor::new(
            image.shape().to_vec(),
            x0.iter().zip(total).map(|(&o, &r)| T::lit((o + scale * r).clamp(0.0, 1.0))).collect(),
        )?)
    };
    let mut iterations = 0;
    let mut x = image.clone();
    while iterations < config.max_iterations {
        let (z, grads) = logit_jacobian(model, &x)?;
        if argmax(&z) != label {
            break;
        }
        let mut best: Option<(f64, f64, usize)> = None;
        for k in 0..z.len() {
            if k == label {
                continue;
            }
            let norm_sq: f64 = grads[k].iter().zip(&grads[label]).map(|(a, b)| (a - b).powi(2)).sum();
            if norm_sq == 0.0 {
                continue;
            }
            let f = z[k] - z[label];
            let dist = f.abs() / norm_sq.sqrt();
            if best.map_or(true, |(d, _, _)| dist < d) {
                best = Some((dist, f, k));
            }
        }
        let Some((_, f, l)) = best else {
            // flat logits: no boundary to step toward
            break;
        };
        let norm_sq: f64 = grads[l].iter().zip(&grads[label]).map(|(a, b)| (a - b).powi(2)).sum();
        let step = f.abs() / norm_sq;
        for (i, r) in total.iter_mut().enumerate() {
            *r += step * (grads[l][i] - grads[label][i]);
        }
        iterations += 1;
        x = perturbed(&total)?;
    }
    AdversarialExample::assemble(model, image, x, label, iterations)
}

/// Pixels are squeezed into `[GUARD, 1 - GUARD]` before `atanh`.
pub const CW_TANH_GUARD: f64 = 1e-6;

struct CwState {
    source: Vec<f64>,
    w: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    best: Option<(f64, Vec<f64>)>,
    last: Vec<f64>,
    previous_loss: f64,
    active: bool,
    steps: usize,
}

fn to_box(w: f64) -> f64 {
    0.5 * (w.tanh() + 1.0)
}

/// Carlini-Wagner L2, untargeted. Minimizes
/// `||x' - x||^2 + c * max(Z_t - max_{i != t} Z_i, -kappa)` over
/// `x' = (tanh(w) + 1) / 2` with Adam, keeping the successful candidate of
/// least L2 distance.
pub fn cw_l2_batch<T: Real>(
    model: &Model<T>,
    images: &[Tensor<T>],
    labels: &[usize],
    config: &AttackConfig,
) -> Result<Vec<AdversarialExample<T>>> {
    check_batch(images, labels)?;
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let lr = config.cw_learning_rate;
    let check_every = (config.max_iterations / 10).max(1);
    let mut states: Vec<CwState> = images
        .iter()
        .map(|img| {
            let source: Vec<f64> = img.data().iter().map(|v| v.as_f64()).collect();
            let w: Vec<f64> = source
                .iter()
                .map(|&p| (2.0 * p.clamp(CW_TANH_GUARD, 1.0 - CW_TANH_GUARD) - 1.0).atanh())
                .collect();
            let n = w.len();
            CwState {
                last: w.iter().map(|&v| to_box(v)).collect(),
                source,
                w,
                m: vec![0.0; n],
                v: vec![0.0; n],
                best: None,
                previous_loss: f64::INFINITY,
                active: true,
                steps: 0,
            }
        })
        .collect();
    let shape = images.first().map(|i| i.shape().to_vec()).unwrap_or_default();
    let k = classes(model);

    for iteration in 0..=config.max_iterations {
        let active: Vec<usize> = (0..states.len()).filter(|&i| states[i].active).collect();
        if active.is_empty() {
            break;
        }
        let candidates: Vec<Tensor<T>> = active
            .iter()
            .map(|&i| Tensor::new(shape.clone(), states[i].last.iter().map(|&v| T::lit(v)).collect()))
            .collect::<std::result::Result<_, _>>()?;
        let (z, tape) = forward_tape(model, &Tensor::stack(&candidates)?)?;
        let mut dz = vec![T::zero(); z.len()];
        for (row, &i) in active.iter().enumerate() {
            let s = &mut states[i];
            let t = labels[i];
            let zr: Vec<f64> = z.data()[row * k..(row + 1) * k].iter().map(|v| v.as_f64()).collect();
            let (other, other_value) = zr
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != t)
                .fold((usize::MAX, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
            let margin = zr[t] - other_value;
            let l2sq: f64 = s.last.iter().zip(&s.source).map(|(a, b)| (a - b).powi(2)).sum();
            let loss = l2sq + config.c * margin.max(-config.confidence_kappa);
            // the candidate actually evaluated is the rounded one
            let evaluated: Vec<f64> = candidates[row].data().iter().map(|v| v.as_f64()).collect();
            if argmax(&zr) != t {
                let l2 = evaluated.iter().zip(&s.source).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                if s.best.as_ref().map_or(true, |(d, _)| l2 < *d) {
                    s.best = Some((l2, evaluated));
                }
            }
            if config.cw_abort_early && iteration > 0 && iteration % check_every == 0 {
                if loss > s.previous_loss * 0.9999 {
                    s.active = false;
                }
                s.previous_loss = loss;
            }
            if iteration == config.max_iterations {
                s.active = false;
            }
            if s.active && margin > -config.confidence_kappa {
                dz[row * k + t] = T::lit(config.c);
                dz[row * k + other] = T::lit(-config.c);
            }
        }
        let still: Vec<usize> = (0..active.len()).filter(|&r| states[active[r]].active).collect();
        if still.is_empty() {
            break;
        }
        let g = model.input_gradient(&tape, &Tensor::new(z.shape().to_vec(), dz)?)?;
        let per = g.len() / active.len();
        for r in still {
            let s = &mut states[active[r]];
            s.steps += 1;
            let gx = &g.data()[r * per..(r + 1) * per];
            let t_corr1 = 1.0 - b1.powi(s.steps as i32);
            let t_corr2 = 1.0 - b2.powi(s.steps as i32);
            for j in 0..per {
                let x = s.last[j];
                let dx = 2.0 * (x - s.source[j]) + gx[j].as_f64();
                let dw = dx * 0.5 * (1.0 - (2.0 * x - 1.0).powi(2));
                s.m[j] = b1 * s.m[j] + (1.0 - b1) * dw;
                s.v[j] = b2 * s.v[j] + (1.0 - b2) * dw * dw;
                let mh = s.m[j] / t_corr1;
                let vh = s.v[j] / t_corr2;
                s.w[j] -= lr * mh / (vh.sqrt() + eps);
                s.last[j] = to_box(s.w[j]);
            }
        }
    }

    states
        .into_iter()
        .zip(images)
        .zip(labels)
        .map(|((s, x0), &label)| {
            let chosen = s.best.map(|(_, p)| p).unwrap_or(s.last);
            let pixels = Tensor::new(shape.clone(), chosen.into_iter().map(|v| T::lit(v)).collect())?;
            AdversarialExample::assemble(model, x0, pixels, label, s.steps)
        })
        .collect()
}

pub fn cw_l2<T: Real>(model: &Model<T>, image: &Tensor<T>, true_label: usize, config: &AttackConfig) -> Result<AdversarialExample<T>> {
    Ok(cw_l2_batch(model, std::slice::from_ref(image), &[true_label], config)?.remove(0))
}

/// Runs `config.kind` over a pool in chunks of `batch`, preserving order.
pub fn run_attack<T: Real>(
    model: &Model<T>,
    images: &[Tensor<T>],
    labels: &[usize],
    config: &AttackConfig,
    batch: usize,
) -> Result<Vec<AdversarialExample<T>>> {
    config.validate()?;
    check_batch(images, labels)?;
    let batch = batch.max(1);
    let mut out = Vec::with_capacity(images.len());
    for (imgs, lbls) in images.chunks(batch).zip(labels.chunks(batch)) {
        match config.kind {
            AttackKind::Fgsm => out.extend(fgsm_batch(model, imgs, lbls, config)?),
            AttackKind::Pgd => out.extend(pgd_batch(model, imgs, lbls, config)?),
            AttackKind::Cw => out.extend(cw_l2_batch(model, imgs, lbls, config)?),
            AttackKind::Deepfool => {
                for (img, &l) in imgs.iter().zip(lbls) {
                    out.push(deepfool(model, img, l, config)?);
                }
            }
        }
    }
    Ok(out)
}

/// CSV log with one row per example.
pub fn attack_log_csv<T: Real>(examples: &[AdversarialExample<T>]) -> String {
    let mut out = String::from("id,true_label,adversarial_label,success,l2,linf,iterations\n");
    for e in examples {
        out.push_str(&format!(
            "{},{},{},{},{:.8},{:.8},{}\n",
            e.source_id, e.true_label, e.adversarial_label, e.success, e.l2_distortion, e.linf_distortion, e.iterations_used
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use fcd_tensor::{LayerSpec, ModelSpec};

    /// Two-class linear model on `n` inputs with logits `(0, w.x + b)`.
    fn linear(w: &[f64], b: f64) -> Model<f64> {
        let n = w.len();
        let spec = ModelSpec::new("linear", vec![n], vec![LayerSpec::dense(2)]);
        let mut weights = vec![0.0; n * 2];
        for (i, &wi) in w.iter().enumerate() {
            weights[i * 2 + 1] = wi;
        }
        Model::from_parts(
            spec,
            vec![vec![
                Tensor::new(vec![n, 2], weights).unwrap(),
                Tensor::new(vec![2], vec![0.0, b]).unwrap(),
            ]],
        )
        .unwrap()
    }

    #[test]
    fn zero_budget_fgsm_is_identity() {
        let m = linear(&[1.0, -2.0], 0.1);
        let x = Tensor::new(vec![2], vec![0.2, 0.4]).unwrap();
        let cfg = AttackConfig {
            epsilon: 0.0,
            ..AttackConfig::new(AttackKind::Fgsm)
        };
        let adv = fgsm(&m, &x, 0, &cfg).unwrap();
        assert_eq!(adv.pixels, x);
        assert!(!adv.success);
    }

    #[test]
    fn single_step_pgd_equals_fgsm() {
        let m = linear(&[3.0, -1.0, 0.5], -0.2);
        let x = Tensor::new(vec![3], vec![0.2, 0.5, 0.9]).unwrap();
        let cfg = AttackConfig {
            pgd_steps: 1,
            pgd_step_size: 0.03,
            ..AttackConfig::new(AttackKind::Pgd)
        };
        assert_eq!(pgd(&m, &x, 0, &cfg).unwrap().pixels, fgsm(&m, &x, 0, &cfg).unwrap().pixels);
    }

    #[test]
    fn deepfool_returns_immediately_when_already_wrong() {
        let m = linear(&[1.0, 1.0], 5.0);
        let x = Tensor::new(vec![2], vec![0.5, 0.5]).unwrap();
        let adv = deepfool(&m, &x, 0, &AttackConfig::new(AttackKind::Deepfool)).unwrap();
        assert!(adv.success);
        assert_eq!(adv.iterations_used, 0);
        assert_eq!(adv.l2_distortion, 0.0);
    }

    #[test]
    fn cw_without_tradeoff_stays_put() {
        let m = linear(&[4.0, -4.0], 0.5);
        let x = Tensor::new(vec![2], vec![0.3, 0.7]).unwrap();
        let cfg = AttackConfig {
            c: 0.0,
            max_iterations: 200,
            ..AttackConfig::new(AttackKind::Cw)
        };
        let adv = cw_l2(&m, &x, 0, &cfg).unwrap();
        assert!(!adv.success);
        assert!(adv.l2_distortion < 1e-6);
    }

    #[test]
    fn attack_kind_round_trips_through_names() {
        for k in AttackKind::ALL {
            assert_eq!(k.name().parse::<AttackKind>().unwrap(), k);
        }
        assert!("bim".parse::<AttackKind>().is_err());
    }
}
