//! Conjugate gradients for Hermitian positive definite operators.

use num_traits::Zero;

use crate::linalg::{axpy_re, is_finite, norm, re_dot};
use crate::scalar::{Cplx, Real};
use crate::tensor::ComplexTensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgConfig {
    /// Relative residual threshold `||Q x - rhs|| / ||rhs||`.
    pub tol: f64,
    pub max_iters: usize,
}

impl CgConfig {
    pub fn new(tol: f64, max_iters: usize) -> Result<Self> {
        let cfg = Self { tol, max_iters };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Tight settings used by the finite-difference checks.
    pub fn gradient_check() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::Parameter(format!(
                "CG needs tol > 0 and max_iters >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcOutput<T> {
    pub x: ComplexTensor<T>,
    pub iters_used: usize,
    pub final_relres: f64,
    /// `false` when `max_iters` ran out before `tol` was met.
    pub converged: bool,
}

/// Solves `Q x = rhs` from the warm start `x0`.
///
/// `apply_q(v, out)` writes `Q v` into `out`; `Q` must be Hermitian positive
/// definite. Since `Q` is Hermitian every `p^H Q p` is real, so step sizes use
/// real inner products only.
pub fn cg_solve<T: Real>(
    mut apply_q: impl FnMut(&[Cplx<T>], &mut [Cplx<T>]),
    rhs: &ComplexTensor<T>,
    x0: &ComplexTensor<T>,
    cfg: &CgConfig,
) -> Result<DcOutput<T>> {
    cfg.validate()?;
    rhs.same_dims(x0, "cg_solve rhs vs x0")?;
    if !is_finite(rhs.data()) || !is_finite(x0.data()) {
        return Err(Error::Numeric("non-finite values in CG input".into()));
    }
    let n = rhs.len();
    let rhs_norm = norm(rhs.data()).f64();
    if rhs_norm == 0.0 {
        // Q is PD, so the unique solution is zero.
        return Ok(DcOutput {
            x: ComplexTensor::zeros(rhs.dims()),
            iters_used: 0,
            final_relres: 0.0,
            converged: true,
        });
    }

    let mut x = x0.clone();
    let mut q = vec![Cplx::zero(); n];
    apply_q(x.data(), &mut q);
    let mut r: Vec<Cplx<T>> = rhs.data().iter().zip(&q).map(|(b, v)| b - v).collect();
    let mut p = r.clone();
    let mut rr = re_dot(&r, &r);
    let mut relres = rr.f64().sqrt() / rhs_norm;
    let mut iters = 0;

    while relres > cfg.tol && iters < cfg.max_iters {
        apply_q(&p, &mut q);
        let pq = re_dot(&p, &q);
        if !(pq.f64() > 0.0) {
            if !pq.is_finite() {
                return Err(Error::Numeric("non-finite p^H Q p in CG".into()));
            }
            return Err(Error::NotPositiveDefinite(pq.f64()));
        }
        let alpha = rr / pq;
        axpy_re(alpha, &p, x.data_mut());
        axpy_re(-alpha, &q, &mut r);
        let rr_new = re_dot(&r, &r);
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + *pi * beta;
        }
        rr = rr_new;
        relres = rr.f64().sqrt() / rhs_norm;
        iters += 1;
    }

    Ok(DcOutput {
        x,
        iters_used: iters,
        final_relres: relres,
        converged: relres <= cfg.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_tensor(v: Vec<Cplx<f64>>) -> ComplexTensor<f64> {
        let n = v.len();
        ComplexTensor::new(vec![n], v).unwrap()
    }

    #[test]
    fn scaled_identity_one_step() {
        let b = vec_tensor((0..10).map(|i| Cplx::new(i as f64, 1.0 - i as f64)).collect());
        let out = cg_solve(
            |v, o| {
                for (oi, vi) in o.iter_mut().zip(v) {
                    *oi = vi * 2.0;
                }
            },
            &b,
            &ComplexTensor::zeros(&[10]),
            &CgConfig::default(),
        )
        .unwrap();
        assert_eq!(out.iters_used, 1);
        for (x, bi) in out.x.data().iter().zip(b.data()) {
            assert!((x - bi / 2.0).norm() < 1e-14);
        }
    }

    #[test]
    fn diagonal_matches_direct_solve() {
        let n = 16;
        let b = vec_tensor((0..n).map(|i| Cplx::new((i as f64).cos(), (i as f64).sin())).collect());
        let cfg = CgConfig::new(1e-12, 100).unwrap();
        let out = cg_solve(
            |v, o| {
                for (i, (oi, vi)) in o.iter_mut().zip(v).enumerate() {
                    *oi = vi * (i + 1) as f64;
                }
            },
            &b,
            &ComplexTensor::zeros(&[n]),
            &cfg,
        )
        .unwrap();
        assert!(out.iters_used <= n);
        for (i, (x, bi)) in out.x.data().iter().zip(b.data()).enumerate() {
            assert!((x - bi / (i + 1) as f64).norm() < 1e-8);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let out = cg_solve(
            |v, o| o.copy_from_slice(v),
            &ComplexTensor::<f64>::zeros(&[5]),
            &ComplexTensor::zeros(&[5]),
            &CgConfig::default(),
        )
        .unwrap();
        assert!(out.x.data().iter().all(|v| v.is_zero()));
        assert!(out.converged);
    }

    #[test]
    fn errors() {
        let mut b = vec_tensor(vec![Cplx::new(1.0, 0.0); 4]);
        let z = ComplexTensor::zeros(&[4]);
        let neg = cg_solve(
            |v, o| {
                for (oi, vi) in o.iter_mut().zip(v) {
                    *oi = -vi;
                }
            },
            &b,
            &z,
            &CgConfig::default(),
        );
        assert!(matches!(neg, Err(Error::NotPositiveDefinite(_))));

        b.data_mut()[2] = Cplx::new(f64::NAN, 0.0);
        let nan = cg_solve(|v, o| o.copy_from_slice(v), &b, &z, &CgConfig::default());
        assert!(matches!(nan, Err(Error::Numeric(_))));

        assert!(CgConfig::new(0.0, 3).is_err());
        assert!(CgConfig::new(1e-3, 0).is_err());
    }

    #[test]
    fn max_iters_flagged() {
        let n = 30;
        let b = vec_tensor(vec![Cplx::new(1.0, 0.0); n]);
        let cfg = CgConfig::new(1e-14, 3).unwrap();
        let out = cg_solve(
            |v, o| {
                for (i, (oi, vi)) in o.iter_mut().zip(v).enumerate() {
                    *oi = vi * (1.0 + i as f64 * i as f64);
                }
            },
            &b,
            &ComplexTensor::zeros(&[n]),
            &cfg,
        )
        .unwrap();
        assert_eq!(out.iters_used, 3);
        assert!(!out.converged && out.final_relres > cfg.tol);
    }
}
