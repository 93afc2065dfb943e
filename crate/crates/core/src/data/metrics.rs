//! Image-quality metrics.

use crate::scalar::Real;
use crate::tensor::ComplexTensor;
use crate::{Error, Result};

/// Reported in place of `+inf` for an exact reconstruction.
pub const PSNR_CAP: f64 = 300.0;

/// `20 log10(max|t| / rmse)` with the complex residual `|x - t|`.
pub fn psnr<T: Real>(recon: &ComplexTensor<T>, target: &ComplexTensor<T>) -> Result<f64> {
    recon.same_dims(target, "psnr")?;
    let peak = target.data().iter().map(|v| v.norm().f64()).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Parameter("psnr target is identically zero".into()));
    }
    let n = target.len() as f64;
    let mse = recon
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b).norm_sqr().f64())
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((20.0 * (peak / mse.sqrt()).log10()).min(PSNR_CAP))
}

/// Mean, sample standard deviation, min and max.
pub fn summarize(values: &[f64]) -> (f64, f64, f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, var.sqrt(), min, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Cplx;

    #[test]
    fn exact_is_capped() {
        let t = ComplexTensor::<f64>::from_fn(&[3, 3], |i| Cplx::new(i as f64, 1.0));
        assert_eq!(psnr(&t, &t).unwrap(), PSNR_CAP);
    }

    #[test]
    fn uniform_error_tenth_is_20db() {
        let mut t = ComplexTensor::<f64>::zeros(&[4, 4]);
        t.data_mut()[5] = Cplx::new(0.0, 1.0);
        let x = ComplexTensor::from_fn(&[4, 4], |i| t.data()[i] + Cplx::new(0.06, 0.08));
        assert!((psnr(&x, &t).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn zero_target_rejected() {
        let t = ComplexTensor::<f64>::zeros(&[2, 2]);
        assert!(psnr(&t, &t).is_err());
    }

    #[test]
    fn summary() {
        let (m, s, lo, hi) = summarize(&[1.0, 2.0, 3.0]);
        assert_eq!((m, s, lo, hi), (2.0, 1.0, 1.0, 3.0));
    }
}
