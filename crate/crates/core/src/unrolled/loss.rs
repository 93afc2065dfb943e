//! Squared-error training loss.

use crate::scalar::Real;
use crate::tensor::ComplexTensor;
use crate::{Error, Result};

fn check<T: Real>(x: &[ComplexTensor<T>], t: &[ComplexTensor<T>]) -> Result<()> {
    if x.len() != t.len() {
        return Err(Error::Dimension(format!(
            "{} reconstructions vs {} targets",
            x.len(),
            t.len()
        )));
    }
    for (a, b) in x.iter().zip(t) {
        a.same_dims(b, "loss")?;
    }
    Ok(())
}

/// `sum_i ||x_i - t_i||^2` over the batch.
pub fn loss_mse<T: Real>(x: &[ComplexTensor<T>], t: &[ComplexTensor<T>]) -> Result<f64> {
    check(x, t)?;
    Ok(x.iter()
        .zip(t)
        .map(|(a, b)| {
            a.data()
                .iter()
                .zip(b.data())
                .map(|(p, q)| (p - q).norm_sqr().f64())
                .sum::<f64>()
        })
        .sum())
}

/// `2 (x_i - t_i)`, real and imaginary parts as independent variables.
pub fn loss_mse_grad<T: Real>(x: &[ComplexTensor<T>], t: &[ComplexTensor<T>]) -> Result<Vec<ComplexTensor<T>>> {
    check(x, t)?;
    let two = T::of(2.0);
    Ok(x.iter()
        .zip(t)
        .map(|(a, b)| ComplexTensor::from_fn(a.dims(), |i| (a.data()[i] - b.data()[i]) * two))
        .collect())
}
