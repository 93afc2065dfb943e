//! 3x3 same-size convolution, zero padding 1, no bias.
//!
//! Activations are `[B, H, W, C]` (a 3-D `[H, W, C]` tensor is a batch of
//! one); kernels are `[3, 3, Cin, Cout]`.

use rayon::prelude::*;

use crate::scalar::Real;
use crate::tensor::RealTensor;
use crate::{Error, Result};

/// `(batch, h, w, c)` of an activation tensor.
pub fn act_shape<T: Real>(x: &RealTensor<T>) -> Result<(usize, usize, usize, usize)> {
    match x.dims()[..] {
        [h, w, c] => Ok((1, h, w, c)),
        [b, h, w, c] => Ok((b, h, w, c)),
        _ => Err(Error::Dimension(format!(
            "activations must be [H, W, C] or [B, H, W, C], got {:?}",
            x.dims()
        ))),
    }
}

fn kernel_shape<T: Real>(k: &RealTensor<T>) -> Result<(usize, usize)> {
    match k.dims()[..] {
        [3, 3, cin, cout] => Ok((cin, cout)),
        _ => Err(Error::Dimension(format!(
            "kernels must be [3, 3, Cin, Cout], got {:?}",
            k.dims()
        ))),
    }
}

fn out_dims(x_dims: &[usize], cout: usize) -> Vec<usize> {
    let mut d = x_dims.to_vec();
    *d.last_mut().unwrap() = cout;
    d
}

/// Forward convolution.
pub fn conv2d_forward<T: Real>(x: &RealTensor<T>, k: &RealTensor<T>) -> Result<RealTensor<T>> {
    let (_, h, w, cin) = act_shape(x)?;
    let (kcin, cout) = kernel_shape(k)?;
    if kcin != cin {
        return Err(Error::Dimension(format!(
            "kernel expects {kcin} input channels, activation has {cin}"
        )));
    }
    let mut out = RealTensor::zeros(&out_dims(x.dims(), cout));
    let kd = k.data();
    out.data_mut()
        .par_chunks_mut(h * w * cout)
        .zip(x.data().par_chunks(h * w * cin))
        .for_each(|(o, xin)| {
            let p = im2col(xin, h, w, cin);
            T::gemm(h * w, 9 * cin, cout, &p, false, kd, false, o, false);
        });
    Ok(out)
}

/// Patch matrix `[H*W, 9*Cin]`; column `(ky*3 + kx)*Cin + ci` matches the kernel layout.
fn im2col<T: Real>(x: &[T], h: usize, w: usize, cin: usize) -> Vec<T> {
    let row = 9 * cin;
    let mut p = vec![T::zero(); h * w * row];
    for y in 0..h {
        for xx in 0..w {
            let dst = &mut p[(y * w + xx) * row..(y * w + xx + 1) * row];
            for ky in 0..3 {
                let sy = y + ky;
                if sy < 1 || sy > h {
                    continue;
                }
                for kx in 0..3 {
                    let sx = xx + kx;
                    if sx < 1 || sx > w {
                        continue;
                    }
                    let src = ((sy - 1) * w + sx - 1) * cin;
                    let off = (ky * 3 + kx) * cin;
                    dst[off..off + cin].copy_from_slice(&x[src..src + cin]);
                }
            }
        }
    }
    p
}

/// Scatter-adds a patch-matrix gradient back onto the image grid.
fn col2im<T: Real>(p: &[T], gx: &mut [T], h: usize, w: usize, cin: usize) {
    let row = 9 * cin;
    for y in 0..h {
        for xx in 0..w {
            let src = &p[(y * w + xx) * row..(y * w + xx + 1) * row];
            for ky in 0..3 {
                let sy = y + ky;
                if sy < 1 || sy > h {
                    continue;
                }
                for kx in 0..3 {
                    let sx = xx + kx;
                    if sx < 1 || sx > w {
                        continue;
                    }
                    let dst = ((sy - 1) * w + sx - 1) * cin;
                    let off = (ky * 3 + kx) * cin;
                    for (g, v) in gx[dst..dst + cin].iter_mut().zip(&src[off..off + cin]) {
                        *g = *g + *v;
                    }
                }
            }
        }
    }
}

/// Reverse pass: returns `(grad_x, grad_kernels)`.
pub fn conv2d_backward<T: Real>(
    x: &RealTensor<T>,
    k: &RealTensor<T>,
    grad_out: &RealTensor<T>,
) -> Result<(RealTensor<T>, RealTensor<T>)> {
    let (_, h, w, cin) = act_shape(x)?;
    let (kcin, cout) = kernel_shape(k)?;
    if kcin != cin || grad_out.dims() != out_dims(x.dims(), cout).as_slice() {
        return Err(Error::Dimension(format!(
            "conv2d_backward: x {:?}, kernels {:?}, grad {:?}",
            x.dims(),
            k.dims(),
            grad_out.dims()
        )));
    }
    let kd = k.data();
    let hw = h * w;
    let mut grad_x = RealTensor::zeros(x.dims());
    let partial_k: Vec<Vec<T>> = grad_x
        .data_mut()
        .par_chunks_mut(hw * cin)
        .zip(x.data().par_chunks(hw * cin))
        .zip(grad_out.data().par_chunks(hw * cout))
        .map(|((gx, xin), g)| {
            let p = im2col(xin, h, w, cin);
            let mut gk = vec![T::zero(); kd.len()];
            T::gemm(9 * cin, hw, cout, &p, true, g, false, &mut gk, false);
            let mut gp = p;
            T::gemm(hw, cout, 9 * cin, g, false, kd, true, &mut gp, false);
            col2im(&gp, gx, h, w, cin);
            gk
        })
        .collect();
    // fixed-order reduction keeps results independent of thread count
    let mut grad_k = RealTensor::zeros(k.dims());
    for gk in &partial_k {
        for (a, b) in grad_k.data_mut().iter_mut().zip(gk) {
            *a = *a + *b;
        }
    }
    Ok((grad_x, grad_k))
}
