//! Slice-level complex vector kernels shared by the solvers.

use num_traits::Zero;

use crate::scalar::{Cplx, Real};

/// `sum conj(a_i) * b_i`
pub fn dot<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Cplx<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(Cplx::zero(), |acc, (x, y)| acc + x.conj() * y)
}

/// `Re sum conj(a_i) * b_i`
pub fn re_dot<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.re * y.re + x.im * y.im)
}

pub fn norm_sqr<T: Real>(a: &[Cplx<T>]) -> T {
    a.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr())
}

pub fn norm<T: Real>(a: &[Cplx<T>]) -> T {
    norm_sqr(a).sqrt()
}

/// `y += alpha * x`
pub fn axpy<T: Real>(alpha: Cplx<T>, x: &[Cplx<T>], y: &mut [Cplx<T>]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// `y += alpha * x` with a real coefficient.
pub fn axpy_re<T: Real>(alpha: T, x: &[Cplx<T>], y: &mut [Cplx<T>]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        yi.re = yi.re + alpha * xi.re;
        yi.im = yi.im + alpha * xi.im;
    }
}

pub fn is_finite<T: Real>(a: &[Cplx<T>]) -> bool {
    a.iter().all(|c| c.re.is_finite() && c.im.is_finite())
}
