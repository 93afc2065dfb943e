//! Floating-point precision abstraction.
//!
//! Everything numeric is generic over [`Real`], implemented for `f32`
//! (default training precision) and `f64` (used by every gradient check).

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_complex::Complex;
use num_traits::Float;
use rustfft::FftNum;

pub type Cplx<T> = Complex<T>;

pub trait Real: Float + FftNum + Default + Sum + Display + LowerExp + Debug + FromStr + Send + Sync + 'static {
    /// MTF dtype code for a real tensor of this precision.
    const REAL_DTYPE: u8;
    /// MTF dtype code for a complex tensor of this precision.
    const COMPLEX_DTYPE: u8;
    const BYTES: usize;
    const PRECISION: Precision;

    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
    fn put_le(self, out: &mut Vec<u8>);
    /// Reads one scalar from the first `BYTES` bytes of `b`.
    fn get_le(b: &[u8]) -> Self;

    /// `C (+)= op(A) op(B)` on dense row-major buffers, where `op(A)` is
    /// `m x k` and `op(B)` is `k x n`. A transposed operand is stored with
    /// its untransposed shape.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], ta: bool, b: &[Self], tb: bool, c: &mut [Self], acc: bool);
}

fn gemm_strides(m: usize, k: usize, n: usize, ta: bool, tb: bool) -> [isize; 4] {
    let (rsa, csa) = if ta { (1, m) } else { (k, 1) };
    let (rsb, csb) = if tb { (1, k) } else { (n, 1) };
    [rsa as isize, csa as isize, rsb as isize, csb as isize]
}

macro_rules! impl_gemm {
    ($f:ident) => {
        fn gemm(m: usize, k: usize, n: usize, a: &[Self], ta: bool, b: &[Self], tb: bool, c: &mut [Self], acc: bool) {
            assert!(
                a.len() >= m * k && b.len() >= k * n && c.len() >= m * n,
                "gemm buffers too small"
            );
            let [rsa, csa, rsb, csb] = gemm_strides(m, k, n, ta, tb);
            let beta = if acc { 1.0 } else { 0.0 };
            // SAFETY: the asserts above bound every index the strides can reach.
            unsafe {
                matrixmultiply::$f(
                    m,
                    k,
                    n,
                    1.0,
                    a.as_ptr(),
                    rsa,
                    csa,
                    b.as_ptr(),
                    rsb,
                    csb,
                    beta,
                    c.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
    };
}

impl Real for f64 {
    impl_gemm!(dgemm);

    const REAL_DTYPE: u8 = 0;
    const COMPLEX_DTYPE: u8 = 1;
    const BYTES: usize = 8;
    const PRECISION: Precision = Precision::F64;

    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get_le(b: &[u8]) -> Self {
        f64::from_le_bytes(b[..8].try_into().expect("8 bytes"))
    }
}

impl Real for f32 {
    impl_gemm!(sgemm);

    const REAL_DTYPE: u8 = 2;
    const COMPLEX_DTYPE: u8 = 3;
    const BYTES: usize = 4;
    const PRECISION: Precision = Precision::F32;

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get_le(b: &[u8]) -> Self {
        f32::from_le_bytes(b[..4].try_into().expect("4 bytes"))
    }
}

/// Runtime precision selector (`precision = f32|f64` in configs).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

impl FromStr for Precision {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(crate::Error::Parameter(format!(
                "precision must be f32 or f64, got {other:?}"
            ))),
        }
    }
}

impl Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
