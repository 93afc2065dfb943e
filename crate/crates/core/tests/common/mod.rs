//! Dense-matrix oracles shared by the integration tests. Nothing here calls
//! the library's FFT or solvers.
#![allow(dead_code)]

use modl::{Cplx, ForwardModel, SamplingMask};
use num_complex::Complex64;

pub type Mat = Vec<Vec<Complex64>>;

/// Centered orthonormal 1-D DFT matrix for the zero-frequency-in-the-middle convention.
pub fn centered_dft(n: usize) -> Mat {
    let c = (n / 2) as f64;
    let s = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| {
            (0..n)
                .map(|j| {
                    let ph = -2.0 * std::f64::consts::PI * (k as f64 - c) * (j as f64 - c) / n as f64;
                    Complex64::from_polar(s, ph)
                })
                .collect()
        })
        .collect()
}

/// Dense `A` of shape `(H*W*C) x (H*W)`, rows ordered pixel-major with coils fastest.
pub fn dense_forward(mask: &SamplingMask, coils: Option<&[Vec<Complex64>]>) -> Mat {
    let (h, w) = mask.shape();
    let (fh, fw) = (centered_dft(h), centered_dft(w));
    let nc = coils.map_or(1, |c| c.len());
    let mut a = vec![vec![Complex64::new(0.0, 0.0); h * w]; h * w * nc];
    for ky in 0..h {
        for kx in 0..w {
            if !mask.get(ky, kx) {
                continue;
            }
            for y in 0..h {
                for x in 0..w {
                    let f = fh[ky][y] * fw[kx][x];
                    for c in 0..nc {
                        let s = coils.map_or(Complex64::new(1.0, 0.0), |m| m[c][y * w + x]);
                        a[(ky * w + kx) * nc + c][y * w + x] = f * s;
                    }
                }
            }
        }
    }
    a
}

pub fn matvec(a: &Mat, x: &[Complex64]) -> Vec<Complex64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}

pub fn adjoint_matvec(a: &Mat, y: &[Complex64]) -> Vec<Complex64> {
    let n = a[0].len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (row, yv) in a.iter().zip(y) {
        for (o, r) in out.iter_mut().zip(row) {
            *o += r.conj() * yv;
        }
    }
    out
}

/// Solves `m x = rhs` by Gaussian elimination with partial pivoting.
pub fn solve(mut m: Mat, mut rhs: Vec<Complex64>) -> Vec<Complex64> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].norm().total_cmp(&m[j][col].norm()))
            .unwrap();
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f.norm() == 0.0 {
                continue;
            }
            for c in col..n {
                let v = m[col][c];
                m[r][c] -= f * v;
            }
            let v = rhs[col];
            rhs[r] -= f * v;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for r in (0..n).rev() {
        let s: Complex64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    x
}

/// `(A^H A + lambda I)` as a dense matrix.
pub fn dense_q(a: &Mat, lambda: f64) -> Mat {
    let n = a[0].len();
    let mut q = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for row in a {
        for i in 0..n {
            if row[i].norm() == 0.0 {
                continue;
            }
            let ci = row[i].conj();
            for j in 0..n {
                q[i][j] += ci * row[j];
            }
        }
    }
    for (i, r) in q.iter_mut().enumerate() {
        r[i] += lambda;
    }
    q
}

pub fn coil_vecs(model: &ForwardModel<f64>) -> Option<Vec<Vec<Complex64>>> {
    model
        .coils()
        .map(|c| (0..c.ncoils()).map(|i| c.map(i).to_vec()).collect())
}

pub fn max_abs_diff(a: &[Cplx<f64>], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Bernoulli mask with the DC sample always acquired; for grids below the
/// variable-density generator's minimum size.
pub fn random_mask(h: usize, w: usize, p: f64, r: &mut impl rand::Rng) -> SamplingMask {
    let mut m: Vec<bool> = (0..h * w).map(|_| r.random_bool(p)).collect();
    m[(h / 2) * w + w / 2] = true;
    let n = m.iter().filter(|v| **v).count();
    SamplingMask::new(h, w, m, (h * w) as f64 / n as f64, 0).unwrap()
}
