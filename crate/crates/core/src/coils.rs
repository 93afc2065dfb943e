//! Synthetic coil sensitivity maps.

use std::f64::consts::PI;

use rand::Rng as _;

use crate::scalar::{Cplx, Real};
use crate::tensor::ComplexTensor;
use crate::{rng, Error, Result};

/// `C` complex sensitivity maps over an `H x W` grid, stored coil-major
/// (`C x H x W`), normalized so `sum_i |s_i(p)|^2 = 1` at every pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilMaps<T> {
    h: usize,
    w: usize,
    maps: ComplexTensor<T>,
}

impl<T: Real> CoilMaps<T> {
    /// Wraps `C x H x W` maps, checking the unit sum-of-squares invariant.
    pub fn new(maps: ComplexTensor<T>) -> Result<Self> {
        let [c, h, w] = maps.dims()[..] else {
            return Err(Error::Dimension(format!(
                "coil maps must be C x H x W, got {:?}",
                maps.dims()
            )));
        };
        let this = Self { h, w, maps };
        let tol = if T::PRECISION == crate::Precision::F64 {
            1e-6
        } else {
            1e-4
        };
        for p in 0..h * w {
            let ss: f64 = (0..c).map(|i| this.map(i)[p].norm_sqr().f64()).sum();
            if (ss - 1.0).abs() > tol {
                return Err(Error::Parameter(format!(
                    "coil maps not normalized at pixel {p}: sum |s|^2 = {ss}"
                )));
            }
        }
        Ok(this)
    }

    pub fn ncoils(&self) -> usize {
        self.maps.dims()[0]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn map(&self, coil: usize) -> &[Cplx<T>] {
        let n = self.h * self.w;
        &self.maps.data()[coil * n..(coil + 1) * n]
    }

    pub fn as_tensor(&self) -> &ComplexTensor<T> {
        &self.maps
    }

    pub fn cast<U: Real>(&self) -> CoilMaps<U> {
        CoilMaps {
            h: self.h,
            w: self.w,
            maps: self.maps.cast(),
        }
    }
}

/// Smooth synthetic maps: Gaussian magnitude bumps centered at evenly spaced
/// points on the image border (width `0.5 * min(H, W)`), each with its own
/// linear phase ramp, then normalized to unit sum-of-squares. A single coil
/// is the constant map 1.
pub fn make_synthetic_coils<T: Real>(h: usize, w: usize, ncoils: usize, seed: u64) -> Result<CoilMaps<T>> {
    if ncoils == 0 || h == 0 || w == 0 {
        return Err(Error::Parameter(format!(
            "need ncoils >= 1 and a non-empty grid, got {ncoils} coils on {h}x{w}"
        )));
    }
    let n = h * w;
    if ncoils == 1 {
        let maps = ComplexTensor::from_fn(&[1, h, w], |_| Cplx::new(T::one(), T::zero()));
        return CoilMaps::new(maps);
    }

    let mut rng = rng::substream(seed, rng::Stream::Coils, 0);
    let offset: f64 = rng.random::<f64>() * 2.0 * PI / ncoils as f64;
    let width = 0.5 * h.min(w) as f64;
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);

    let mut raw = vec![Cplx::new(0.0f64, 0.0); ncoils * n];
    for coil in 0..ncoils {
        let angle = offset + 2.0 * PI * coil as f64 / ncoils as f64;
        // Project the direction onto the bounding rectangle.
        let (dy, dx) = (angle.sin(), angle.cos());
        let t = (cy / dy.abs().max(1e-12)).min(cx / dx.abs().max(1e-12));
        let (by, bx) = (cy + t * dy, cx + t * dx);
        let ky = (rng.random::<f64>() - 0.5) * 2.0 * PI / h as f64;
        let kx = (rng.random::<f64>() - 0.5) * 2.0 * PI / w as f64;
        let phi0 = rng.random::<f64>() * 2.0 * PI;
        for y in 0..h {
            for x in 0..w {
                let d2 = (y as f64 - by).powi(2) + (x as f64 - bx).powi(2);
                let mag = (-d2 / (2.0 * width * width)).exp();
                let ph = phi0 + ky * y as f64 + kx * x as f64;
                raw[coil * n + y * w + x] = Cplx::from_polar(mag, ph);
            }
        }
    }
    for p in 0..n {
        let ss: f64 = (0..ncoils).map(|c| raw[c * n + p].norm_sqr()).sum();
        let inv = 1.0 / ss.sqrt();
        for c in 0..ncoils {
            raw[c * n + p] *= inv;
        }
    }
    let data = raw.into_iter().map(|c| Cplx::new(T::of(c.re), T::of(c.im))).collect();
    CoilMaps::new(ComplexTensor::new(vec![ncoils, h, w], data)?)
}
