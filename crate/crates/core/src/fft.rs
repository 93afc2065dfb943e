//! Centered, orthonormal 2-D DFT on row-major `H x W` grids.
//!
//! The k-space origin sits at index `(H/2, W/2)`; both directions scale by
//! `1/sqrt(H*W)` so the transform is unitary.

use std::sync::Arc;

use num_traits::Zero;
use rustfft::{Fft, FftPlanner};

use crate::scalar::{Cplx, Real};

#[derive(Clone)]
pub struct CenteredFft2<T: Real> {
    h: usize,
    w: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Real> std::fmt::Debug for CenteredFft2<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CenteredFft2")
            .field("h", &self.h)
            .field("w", &self.w)
            .finish()
    }
}

impl<T: Real> CenteredFft2<T> {
    pub fn new(h: usize, w: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            h,
            w,
            row_fwd: planner.plan_fft_forward(w),
            row_inv: planner.plan_fft_inverse(w),
            col_fwd: planner.plan_fft_forward(h),
            col_inv: planner.plan_fft_inverse(h),
            scale: T::one() / T::of((h * w) as f64).sqrt(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    /// Image -> centered k-space, in place.
    pub fn forward(&self, data: &mut [Cplx<T>]) {
        self.transform(data, true);
    }

    /// Centered k-space -> image, in place.
    pub fn inverse(&self, data: &mut [Cplx<T>]) {
        self.transform(data, false);
    }

    fn transform(&self, data: &mut [Cplx<T>], forward: bool) {
        let (h, w) = (self.h, self.w);
        assert_eq!(data.len(), h * w, "fft buffer has wrong length");
        let (row, col) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        // ifftshift on the way in, fftshift on the way out.
        let (in_r, in_c) = (h - h / 2, w - w / 2);
        let (out_r, out_c) = (h / 2, w / 2);

        let mut buf = vec![Cplx::zero(); h * w];
        for y in 0..h {
            let dst = ((y + in_r) % h) * w;
            let src = &data[y * w..(y + 1) * w];
            buf[dst + in_c..dst + w].copy_from_slice(&src[..w - in_c]);
            buf[dst..dst + in_c].copy_from_slice(&src[w - in_c..]);
        }
        let scratch_len = row.get_inplace_scratch_len().max(col.get_inplace_scratch_len());
        let mut scratch = vec![Cplx::zero(); scratch_len];
        row.process_with_scratch(&mut buf, &mut scratch);

        // transpose so columns become contiguous
        let mut tr = vec![Cplx::zero(); h * w];
        transpose(&buf, &mut tr, h, w);
        col.process_with_scratch(&mut tr, &mut scratch);
        transpose(&tr, &mut buf, w, h);

        let s = self.scale;
        let scaled = |v: &Cplx<T>| Cplx::new(v.re * s, v.im * s);
        for (y, src) in buf.chunks_exact(w).enumerate() {
            let dst = if y + out_r >= h { y + out_r - h } else { y + out_r } * w;
            let row = &mut data[dst..dst + w];
            for (d, v) in row[out_c..].iter_mut().zip(&src[..w - out_c]) {
                *d = scaled(v);
            }
            for (d, v) in row[..out_c].iter_mut().zip(&src[w - out_c..]) {
                *d = scaled(v);
            }
        }
    }
}

/// `dst[x * h + y] = src[y * w + x]`, in cache-sized tiles.
fn transpose<T: Copy>(src: &[T], dst: &mut [T], h: usize, w: usize) {
    const TILE: usize = 16;
    for y0 in (0..h).step_by(TILE) {
        for x0 in (0..w).step_by(TILE) {
            for y in y0..(y0 + TILE).min(h) {
                for x in x0..(x0 + TILE).min(w) {
                    dst[x * h + y] = src[y * w + x];
                }
            }
        }
    }
}
