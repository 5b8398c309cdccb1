//! Channels-last windowed kernels over up to three spatial axes.
//!
//! 2D layers are lifted to 3D with a unit third axis, so one set of
//! kernels serves both.

use crate::scalar::Real;
use crate::spec::WindowGeometry;

fn in3(g: &WindowGeometry) -> [usize; 3] {
    g.in_dims
}

/// Number of columns in the patch matrix: window volume times channels.
pub(crate) fn patch_width(g: &WindowGeometry) -> usize {
    g.kernel.iter().product::<usize>() * g.channels
}

pub(crate) fn positions(g: &WindowGeometry) -> usize {
    g.out3().iter().product()
}

/// Unfolds one sample into a `(positions, window * channels)` matrix.
/// Column order is `(k1, k2, k3, channel)`, matching weight layout.
pub(crate) fn im2col<T: Real>(g: &WindowGeometry, x: &[T], cols: &mut [T]) {
    let [d1, d2, d3] = in3(g);
    let [o1, o2, o3] = g.out3();
    let [k1, k2, k3] = g.kernel;
    let c = g.channels;
    let width = patch_width(g);
    debug_assert_eq!(cols.len(), o1 * o2 * o3 * width);
    let mut row = 0;
    for p1 in 0..o1 {
        for p2 in 0..o2 {
            for p3 in 0..o3 {
                let dst = &mut cols[row * width..(row + 1) * width];
                let mut col = 0;
                for a in 0..k1 {
                    let i1 = (p1 * g.stride[0] + a) as isize - g.pad[0][0] as isize;
                    for b in 0..k2 {
                        let i2 = (p2 * g.stride[1] + b) as isize - g.pad[1][0] as isize;
                        for e in 0..k3 {
                            let i3 = (p3 * g.stride[2] + e) as isize - g.pad[2][0] as isize;
                            let chunk = &mut dst[col..col + c];
                            if i1 < 0
                                || i2 < 0
                                || i3 < 0
                                || i1 as usize >= d1
                                || i2 as usize >= d2
                                || i3 as usize >= d3
                            {
                                chunk.fill(T::zero());
                            } else {
                                let src = ((i1 as usize * d2 + i2 as usize) * d3 + i3 as usize) * c;
                                chunk.copy_from_slice(&x[src..src + c]);
                            }
                            col += c;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
pub(crate) fn col2im_add<T: Real>(g: &WindowGeometry, cols: &[T], dx: &mut [T]) {
    let [d1, d2, d3] = in3(g);
    let [o1, o2, o3] = g.out3();
    let [k1, k2, k3] = g.kernel;
    let c = g.channels;
    let width = patch_width(g);
    let mut row = 0;
    for p1 in 0..o1 {
        for p2 in 0..o2 {
            for p3 in 0..o3 {
                let src = &cols[row * width..(row + 1) * width];
                let mut col = 0;
                for a in 0..k1 {
                    let i1 = (p1 * g.stride[0] + a) as isize - g.pad[0][0] as isize;
                    for b in 0..k2 {
                        let i2 = (p2 * g.stride[1] + b) as isize - g.pad[1][0] as isize;
                        for e in 0..k3 {
                            let i3 = (p3 * g.stride[2] + e) as isize - g.pad[2][0] as isize;
                            if i1 >= 0
                                && i2 >= 0
                                && i3 >= 0
                                && (i1 as usize) < d1
                                && (i2 as usize) < d2
                                && (i3 as usize) < d3
                            {
                                let dst = ((i1 as usize * d2 + i2 as usize) * d3 + i3 as usize) * c;
                                for (d, &s) in dx[dst..dst + c].iter_mut().zip(&src[col..col + c]) {
                                    *d += s;
                                }
                            }
                            col += c;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Max pooling for one sample; writes the flat input index of each maximum.
pub(crate) fn maxpool<T: Real>(g: &WindowGeometry, x: &[T], y: &mut [T], argmax: &mut [u32]) {
    let [_, d2, d3] = in3(g);
    let [o1, o2, o3] = g.out3();
    let [k1, k2, k3] = g.kernel;
    let c = g.channels;
    let mut out = 0;
    for p1 in 0..o1 {
        for p2 in 0..o2 {
            for p3 in 0..o3 {
                for ch in 0..c {
                    let mut best = T::neg_infinity();
                    let mut best_idx = 0usize;
                    for a in 0..k1 {
                        let i1 = p1 * g.stride[0] + a;
                        for b in 0..k2 {
                            let i2 = p2 * g.stride[1] + b;
                            for e in 0..k3 {
                                let i3 = p3 * g.stride[2] + e;
                                let idx = ((i1 * d2 + i2) * d3 + i3) * c + ch;
                                // strict comparison keeps the first maximum on ties
                                if x[idx] > best {
                                    best = x[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                    }
                    y[out] = best;
                    argmax[out] = best_idx as u32;
                    out += 1;
                }
            }
        }
    }
}

/// Nearest-neighbour upsampling of one `(d1, d2, d3, c)` sample.
pub(crate) fn upsample<T: Real>(dims: [usize; 3], c: usize, factors: [usize; 3], x: &[T], y: &mut [T]) {
    let [d1, d2, d3] = dims;
    let (u1, u2, u3) = (d1 * factors[0], d2 * factors[1], d3 * factors[2]);
    let mut out = 0;
    for a in 0..u1 {
        for b in 0..u2 {
            for e in 0..u3 {
                let src = (((a / factors[0]) * d2 + b / factors[1]) * d3 + e / factors[2]) * c;
                y[out..out + c].copy_from_slice(&x[src..src + c]);
                out += c;
            }
        }
    }
}

pub(crate) fn upsample_backward<T: Real>(dims: [usize; 3], c: usize, factors: [usize; 3], dy: &[T], dx: &mut [T]) {
    let [d1, d2, d3] = dims;
    let (u1, u2, u3) = (d1 * factors[0], d2 * factors[1], d3 * factors[2]);
    let mut out = 0;
    for a in 0..u1 {
        for b in 0..u2 {
            for e in 0..u3 {
                let dst = (((a / factors[0]) * d2 + b / factors[1]) * d3 + e / factors[2]) * c;
                for (d, &s) in dx[dst..dst + c].iter_mut().zip(&dy[out..out + c]) {
                    *d += s;
                }
                out += c;
            }
        }
    }
}
