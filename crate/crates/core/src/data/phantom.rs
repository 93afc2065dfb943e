//! Random ellipse phantoms with smooth texture and phase.

use rand::Rng;

use crate::rng::{self, Stream};
use crate::scalar::{Cplx, Real};
use crate::tensor::ComplexTensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhantomSpec {
    pub h: usize,
    pub w: usize,
    /// Inclusive range for the number of ellipses.
    pub n_ellipses: (usize, usize),
    pub texture_amp: f64,
    /// Peak phase excursion in radians.
    pub phase_amp: f64,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn new(h: usize, w: usize, seed: u64) -> Self {
        Self {
            h,
            w,
            n_ellipses: (4, 10),
            texture_amp: 0.05,
            phase_amp: 1.0,
            seed,
        }
    }
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
    cos: f64,
    sin: f64,
    value: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        (u / self.ax).powi(2) + (v / self.ay).powi(2) <= 1.0
    }
}

/// Coordinates are normalized to `[-1, 1]`. The first ellipse is a large
/// bright body; later ones add or remove intensity inside it. Magnitudes
/// are clamped to `[0, 1]`.
pub fn make_phantom<T: Real>(spec: &PhantomSpec) -> ComplexTensor<T> {
    let mut r = rng::substream(spec.seed, Stream::Phantom, 0);
    let (lo, hi) = (
        spec.n_ellipses.0.min(spec.n_ellipses.1),
        spec.n_ellipses.0.max(spec.n_ellipses.1),
    );
    let n = r.random_range(lo..=hi);
    let mut ellipses = Vec::with_capacity(n);
    for i in 0..n {
        let angle = r.random_range(0.0..std::f64::consts::PI);
        let e = if i == 0 {
            Ellipse {
                cy: r.random_range(-0.08..0.08),
                cx: r.random_range(-0.08..0.08),
                ay: r.random_range(0.65..0.85),
                ax: r.random_range(0.55..0.75),
                cos: angle.cos(),
                sin: angle.sin(),
                value: r.random_range(0.55..0.8),
            }
        } else {
            let sign = if r.random_bool(0.65) { 1.0 } else { -1.0 };
            Ellipse {
                cy: r.random_range(-0.5..0.5),
                cx: r.random_range(-0.45..0.45),
                ay: r.random_range(0.06..0.3),
                ax: r.random_range(0.04..0.25),
                cos: angle.cos(),
                sin: angle.sin(),
                value: sign * r.random_range(0.1..0.35),
            }
        };
        ellipses.push(e);
    }

    // low-frequency texture: a few random plane waves
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                r.random_range(1.0..5.0) * std::f64::consts::PI,
                r.random_range(0.0..std::f64::consts::TAU),
                r.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let phase: [f64; 5] = std::array::from_fn(|_| r.random_range(-1.0..1.0));

    let (h, w) = (spec.h, spec.w);
    ComplexTensor::from_fn(&[h, w], |i| {
        let y = 2.0 * ((i / w) as f64 + 0.5) / h as f64 - 1.0;
        let x = 2.0 * ((i % w) as f64 + 0.5) / w as f64 - 1.0;
        let mut m: f64 = ellipses.iter().filter(|e| e.contains(y, x)).map(|e| e.value).sum();
        if spec.texture_amp != 0.0 && m > 0.0 {
            let t: f64 = waves
                .iter()
                .map(|&(f, dir, ph)| (f * (x * dir.cos() + y * dir.sin()) + ph).sin())
                .sum::<f64>()
                / waves.len() as f64;
            m += spec.texture_amp * t;
        }
        let m = m.clamp(0.0, 1.0);
        let p = spec.phase_amp
            * 0.5
            * (phase[0] * x + phase[1] * y + phase[2] * x * y + phase[3] * (x * x - 0.5) + phase[4] * (y * y - 0.5));
        Cplx::from_polar(T::of(m), T::of(p))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_spec_is_zero() {
        let spec = PhantomSpec {
            n_ellipses: (0, 0),
            texture_amp: 0.0,
            ..PhantomSpec::new(16, 12, 3)
        };
        let p = make_phantom::<f64>(&spec);
        assert!(p.data().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn magnitudes_in_unit_range_and_deterministic() {
        for seed in 0..20 {
            let spec = PhantomSpec {
                texture_amp: 0.5,
                ..PhantomSpec::new(32, 32, seed)
            };
            let p = make_phantom::<f64>(&spec);
            assert!(p.data().iter().all(|v| v.norm() <= 1.0 + 1e-12));
            assert!(p.data().iter().any(|v| v.norm() > 0.3));
            assert_eq!(p, make_phantom::<f64>(&spec));
        }
        let a = make_phantom::<f64>(&PhantomSpec::new(16, 16, 1));
        let b = make_phantom::<f64>(&PhantomSpec::new(16, 16, 2));
        assert_ne!(a, b);
    }
}
