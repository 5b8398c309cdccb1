use rand::{Rng, RngCore};

use crate::conv;
use crate::error::{Result, TensorError};
use crate::scalar::Real;
use crate::spec::{LayerKind, LayerSpec, WindowGeometry};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Conv { geom: WindowGeometry, cout: usize },
    Pool { geom: WindowGeometry },
    Dense { inputs: usize, units: usize },
    Relu,
    Sigmoid,
    Softmax { classes: usize },
    Dropout { rate: f64 },
    Upsample { dims: [usize; 3], channels: usize, factors: [usize; 3] },
    Flatten,
}

/// A layer with its geometry resolved against a concrete input shape.
#[derive(Clone, Debug)]
pub(crate) struct CompiledLayer {
    pub op: Op,
    pub kind: LayerKind,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
}

/// Per-layer state retained by a gradient-retaining forward pass.
#[derive(Clone, Debug)]
pub(crate) enum Cache<T> {
    Input(Tensor<T>),
    Output(Tensor<T>),
    Argmax(Vec<u32>),
    Mask(Vec<T>),
    Nothing,
}

fn batch_shape(n: usize, shape: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(shape.len() + 1);
    s.push(n);
    s.extend_from_slice(shape);
    s
}

impl CompiledLayer {
    pub fn compile(index: usize, spec: &LayerSpec, input: &[usize]) -> Result<Self> {
        let out_shape = spec.output_shape(index, input)?;
        let op = match spec.kind {
            LayerKind::Conv2d | LayerKind::Conv3d => Op::Conv {
                geom: spec.window_geometry(index, input, true)?,
                cout: spec.kernel_count,
            },
            LayerKind::Maxpool2d | LayerKind::Maxpool3d => Op::Pool {
                geom: spec.window_geometry(index, input, false)?,
            },
            LayerKind::Dense => Op::Dense {
                inputs: input[0],
                units: spec.kernel_count,
            },
            LayerKind::Relu => Op::Relu,
            LayerKind::Sigmoid => Op::Sigmoid,
            LayerKind::Softmax => Op::Softmax {
                classes: *input.last().expect("non-empty shape"),
            },
            LayerKind::Dropout => Op::Dropout {
                rate: spec.dropout_rate,
            },
            LayerKind::Upsample3d => Op::Upsample {
                dims: [input[0], input[1], input[2]],
                channels: input[3],
                factors: [spec.kernel_shape[0], spec.kernel_shape[1], spec.kernel_shape[2]],
            },
            LayerKind::Flatten => Op::Flatten,
        };
        Ok(Self {
            op,
            kind: spec.kind,
            in_shape: input.to_vec(),
            out_shape,
        })
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match &self.op {
            Op::Conv { geom, cout } => {
                let mut w: Vec<usize> = geom.kernel[..geom.out_dims.len()].to_vec();
                w.push(geom.channels);
                w.push(*cout);
                vec![w, vec![*cout]]
            }
            Op::Dense { inputs, units } => vec![vec![*inputs, *units], vec![*units]],
            _ => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        match &self.op {
            Op::Conv { geom, .. } => conv::patch_width(geom),
            Op::Dense { inputs, .. } => *inputs,
            _ => 1,
        }
    }

    /// He-style uniform weights scaled by fan-in; zero biases.
    pub fn init_params<T: Real>(&self, rng: &mut dyn RngCore) -> Vec<Tensor<T>> {
        let bound = (6.0 / self.fan_in() as f64).sqrt();
        self.param_shapes()
            .into_iter()
            .enumerate()
            .map(|(i, shape)| {
                if i == 0 {
                    Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-bound..bound))).expect("valid shape")
                } else {
                    Tensor::zeros(shape).expect("valid shape")
                }
            })
            .collect()
    }

    pub fn forward<T: Real>(
        &self,
        params: &[Tensor<T>],
        x: &Tensor<T>,
        train: bool,
        keep: bool,
        rng: &mut dyn RngCore,
    ) -> Result<(Tensor<T>, Cache<T>)> {
        let n = x.batch_len();
        let in_len: usize = self.in_shape.iter().product();
        let out_len: usize = self.out_shape.iter().product();
        let out_shape = batch_shape(n, &self.out_shape);
        let xd = x.data();
        match &self.op {
            Op::Conv { geom, cout } => {
                let (w, b) = (params[0].data(), params[1].data());
                let p = conv::positions(geom);
                let width = conv::patch_width(geom);
                let mut cols = vec![T::zero(); p * width];
                let mut y = vec![T::zero(); n * out_len];
                for s in 0..n {
                    conv::im2col(geom, &xd[s * in_len..(s + 1) * in_len], &mut cols);
                    let ys = &mut y[s * out_len..(s + 1) * out_len];
                    for row in ys.chunks_exact_mut(*cout) {
                        row.copy_from_slice(b);
                    }
                    T::gemm(
                        p, width, *cout, T::one(), &cols, width as isize, 1, w, *cout as isize, 1, T::one(), ys,
                        *cout as isize, 1,
                    );
                }
                let cache = if keep { Cache::Input(x.clone()) } else { Cache::Nothing };
                Ok((Tensor::new(out_shape, y)?, cache))
            }
            Op::Dense { inputs, units } => {
                let (w, b) = (params[0].data(), params[1].data());
                let mut y = vec![T::zero(); n * units];
                for row in y.chunks_exact_mut(*units) {
                    row.copy_from_slice(b);
                }
                T::gemm(
                    n, *inputs, *units, T::one(), xd, *inputs as isize, 1, w, *units as isize, 1, T::one(), &mut y,
                    *units as isize, 1,
                );
                let cache = if keep { Cache::Input(x.clone()) } else { Cache::Nothing };
                Ok((Tensor::new(out_shape, y)?, cache))
            }
            Op::Pool { geom } => {
                let mut y = vec![T::zero(); n * out_len];
                let mut arg = vec![0u32; n * out_len];
                for s in 0..n {
                    conv::maxpool(
                        geom,
                        &xd[s * in_len..(s + 1) * in_len],
                        &mut y[s * out_len..(s + 1) * out_len],
                        &mut arg[s * out_len..(s + 1) * out_len],
                    );
                }
                let cache = if keep { Cache::Argmax(arg) } else { Cache::Nothing };
                Ok((Tensor::new(out_shape, y)?, cache))
            }
            Op::Relu => {
                let y = x.map(|v| if v > T::zero() { v } else { T::zero() });
                let cache = if keep { Cache::Output(y.clone()) } else { Cache::Nothing };
                Ok((y, cache))
            }
            Op::Sigmoid => {
                let y = x.map(|v| T::one() / (T::one() + (-v).exp()));
                let cache = if keep { Cache::Output(y.clone()) } else { Cache::Nothing };
                Ok((y, cache))
            }
            Op::Softmax { classes } => {
                let mut y = xd.to_vec();
                for row in y.chunks_exact_mut(*classes) {
                    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                    let mut total = T::zero();
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        total += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= total;
                    }
                }
                let y = Tensor::new(out_shape, y)?;
                let cache = if keep { Cache::Output(y.clone()) } else { Cache::Nothing };
                Ok((y, cache))
            }
            Op::Dropout { rate } => {
                if !train || *rate == 0.0 {
                    return Ok((x.clone(), Cache::Nothing));
                }
                let keep_scale = T::lit(1.0 / (1.0 - rate));
                let mask: Vec<T> = (0..x.len())
                    .map(|_| if rng.gen::<f64>() < *rate { T::zero() } else { keep_scale })
                    .collect();
                let y = Tensor::new(
                    out_shape,
                    xd.iter().zip(&mask).map(|(&v, &m)| v * m).collect(),
                )?;
                let cache = if keep { Cache::Mask(mask) } else { Cache::Nothing };
                Ok((y, cache))
            }
            Op::Upsample { dims, channels, factors } => {
                let mut y = vec![T::zero(); n * out_len];
                for s in 0..n {
                    conv::upsample(
                        *dims,
                        *channels,
                        *factors,
                        &xd[s * in_len..(s + 1) * in_len],
                        &mut y[s * out_len..(s + 1) * out_len],
                    );
                }
                Ok((Tensor::new(out_shape, y)?, Cache::Nothing))
            }
            Op::Flatten => Ok((x.clone().reshape(out_shape)?, Cache::Nothing)),
        }
    }

    /// Returns the input gradient and, when requested, parameter gradients.
    pub fn backward<T: Real>(
        &self,
        params: &[Tensor<T>],
        cache: &Cache<T>,
        dy: &Tensor<T>,
        want_params: bool,
    ) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let n = dy.batch_len();
        let in_len: usize = self.in_shape.iter().product();
        let out_len: usize = self.out_shape.iter().product();
        let in_shape = batch_shape(n, &self.in_shape);
        let dyd = dy.data();
        let missing = || TensorError::MissingTape;
        match &self.op {
            Op::Conv { geom, cout } => {
                let Cache::Input(x) = cache else { return Err(missing()) };
                let w = params[0].data();
                let p = conv::positions(geom);
                let width = conv::patch_width(geom);
                let mut cols = vec![T::zero(); p * width];
                let mut dcols = vec![T::zero(); p * width];
                let mut dx = vec![T::zero(); n * in_len];
                let mut dw = vec![T::zero(); if want_params { width * cout } else { 0 }];
                let mut db = vec![T::zero(); if want_params { *cout } else { 0 }];
                for s in 0..n {
                    let dys = &dyd[s * out_len..(s + 1) * out_len];
                    if want_params {
                        conv::im2col(geom, &x.data()[s * in_len..(s + 1) * in_len], &mut cols);
                        T::gemm(
                            width, p, *cout, T::one(), &cols, 1, width as isize, dys, *cout as isize, 1, T::one(),
                            &mut dw, *cout as isize, 1,
                        );
                        for row in dys.chunks_exact(*cout) {
                            for (d, &g) in db.iter_mut().zip(row) {
                                *d += g;
                            }
                        }
                    }
                    T::gemm(
                        p, *cout, width, T::one(), dys, *cout as isize, 1, w, 1, *cout as isize, T::zero(),
                        &mut dcols, width as isize, 1,
                    );
                    conv::col2im_add(geom, &dcols, &mut dx[s * in_len..(s + 1) * in_len]);
                }
                let grads = if want_params {
                    let shapes = self.param_shapes();
                    vec![Tensor::new(shapes[0].clone(), dw)?, Tensor::new(shapes[1].clone(), db)?]
                } else {
                    Vec::new()
                };
                Ok((Tensor::new(in_shape, dx)?, grads))
            }
            Op::Dense { inputs, units } => {
                let Cache::Input(x) = cache else { return Err(missing()) };
                let w = params[0].data();
                let mut dx = vec![T::zero(); n * inputs];
                T::gemm(
                    n, *units, *inputs, T::one(), dyd, *units as isize, 1, w, 1, *units as isize, T::zero(), &mut dx,
                    *inputs as isize, 1,
                );
                let grads = if want_params {
                    let mut dw = vec![T::zero(); inputs * units];
                    T::gemm(
                        *inputs, n, *units, T::one(), x.data(), 1, *inputs as isize, dyd, *units as isize, 1,
                        T::zero(), &mut dw, *units as isize, 1,
                    );
                    let mut db = vec![T::zero(); *units];
                    for row in dyd.chunks_exact(*units) {
                        for (d, &g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    vec![Tensor::new(vec![*inputs, *units], dw)?, Tensor::new(vec![*units], db)?]
                } else {
                    Vec::new()
                };
                Ok((Tensor::new(in_shape, dx)?, grads))
            }
            Op::Pool { .. } => {
                let Cache::Argmax(arg) = cache else { return Err(missing()) };
                let mut dx = vec![T::zero(); n * in_len];
                for s in 0..n {
                    let dxs = &mut dx[s * in_len..(s + 1) * in_len];
                    for (&g, &i) in dyd[s * out_len..(s + 1) * out_len]
                        .iter()
                        .zip(&arg[s * out_len..(s + 1) * out_len])
                    {
                        dxs[i as usize] += g;
                    }
                }
                Ok((Tensor::new(in_shape, dx)?, Vec::new()))
            }
            Op::Relu => {
                let Cache::Output(y) = cache else { return Err(missing()) };
                let dx = dy.zip_map(y, |g, v| if v > T::zero() { g } else { T::zero() })?;
                Ok((dx, Vec::new()))
            }
            Op::Sigmoid => {
                let Cache::Output(y) = cache else { return Err(missing()) };
                let dx = dy.zip_map(y, |g, v| g * v * (T::one() - v))?;
                Ok((dx, Vec::new()))
            }
            Op::Softmax { classes } => {
                let Cache::Output(y) = cache else { return Err(missing()) };
                let mut dx = vec![T::zero(); dy.len()];
                for ((dxr, dyr), yr) in dx
                    .chunks_exact_mut(*classes)
                    .zip(dyd.chunks_exact(*classes))
                    .zip(y.data().chunks_exact(*classes))
                {
                    let dot: T = dyr.iter().zip(yr).map(|(&g, &v)| g * v).sum();
                    for ((d, &g), &v) in dxr.iter_mut().zip(dyr).zip(yr) {
                        *d = v * (g - dot);
                    }
                }
                Ok((Tensor::new(in_shape, dx)?, Vec::new()))
            }
            Op::Dropout { .. } => match cache {
                Cache::Mask(mask) => {
                    let dx: Vec<T> = dyd.iter().zip(mask).map(|(&g, &m)| g * m).collect();
                    Ok((Tensor::new(in_shape, dx)?, Vec::new()))
                }
                _ => Ok((dy.clone().reshape(in_shape)?, Vec::new())),
            },
            Op::Upsample { dims, channels, factors } => {
                let mut dx = vec![T::zero(); n * in_len];
                for s in 0..n {
                    conv::upsample_backward(
                        *dims,
                        *channels,
                        *factors,
                        &dyd[s * out_len..(s + 1) * out_len],
                        &mut dx[s * in_len..(s + 1) * in_len],
                    );
                }
                Ok((Tensor::new(in_shape, dx)?, Vec::new()))
            }
            Op::Flatten => Ok((dy.clone().reshape(in_shape)?, Vec::new())),
        }
    }
}
