//! Per-channel batch normalization over `(batch, H, W)`.

use crate::nn::conv::act_shape;
use crate::scalar::Real;
use crate::tensor::RealTensor;
use crate::{Error, Result};

/// Added to the variance before the square root.
pub const BN_EPS: f64 = 1e-5;
/// Weight of the old running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics and keep a cache for backward.
    Train,
    /// Normalize with running statistics.
    Infer,
}

/// What the train-mode reverse pass needs, plus the batch statistics.
#[derive(Clone, Debug)]
pub struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Biased batch variance.
    pub var: Vec<T>,
}

fn check<T: Real>(x: &RealTensor<T>, gamma: &[T], beta: &[T]) -> Result<usize> {
    let (_, _, _, c) = act_shape(x)?;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Dimension(format!(
            "batch norm: {c} channels, gamma {} / beta {}",
            gamma.len(),
            beta.len()
        )));
    }
    Ok(c)
}

/// Train-mode forward with batch statistics.
pub fn batchnorm_train<T: Real>(x: &RealTensor<T>, gamma: &[T], beta: &[T]) -> Result<(RealTensor<T>, BnCache<T>)> {
    let c = check(x, gamma, beta)?;
    let m = x.len() / c;
    let inv_m = T::one() / T::of(m as f64);
    let mut mean = vec![T::zero(); c];
    for px in x.data().chunks_exact(c) {
        for (a, &v) in mean.iter_mut().zip(px) {
            *a = *a + v;
        }
    }
    mean.iter_mut().for_each(|a| *a = *a * inv_m);
    let mut var = vec![T::zero(); c];
    for px in x.data().chunks_exact(c) {
        for ((a, &v), &mu) in var.iter_mut().zip(px).zip(&mean) {
            let d = v - mu;
            *a = *a + d * d;
        }
    }
    var.iter_mut().for_each(|a| *a = *a * inv_m);
    let eps = T::of(BN_EPS);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

    let mut xhat = vec![T::zero(); x.len()];
    let mut y = RealTensor::zeros(x.dims());
    for ((xh, out), px) in xhat
        .chunks_exact_mut(c)
        .zip(y.data_mut().chunks_exact_mut(c))
        .zip(x.data().chunks_exact(c))
    {
        for ch in 0..c {
            let n = (px[ch] - mean[ch]) * inv_std[ch];
            xh[ch] = n;
            out[ch] = gamma[ch] * n + beta[ch];
        }
    }
    Ok((
        y,
        BnCache {
            xhat,
            inv_std,
            mean,
            var,
        },
    ))
}

/// Infer-mode forward with running statistics.
pub fn batchnorm_infer<T: Real>(
    x: &RealTensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
) -> Result<RealTensor<T>> {
    let c = check(x, gamma, beta)?;
    if running_mean.len() != c || running_var.len() != c {
        return Err(Error::Dimension("batch norm running stats length".into()));
    }
    let eps = T::of(BN_EPS);
    let scale: Vec<T> = (0..c).map(|ch| gamma[ch] / (running_var[ch] + eps).sqrt()).collect();
    let mut y = RealTensor::zeros(x.dims());
    for (out, px) in y.data_mut().chunks_exact_mut(c).zip(x.data().chunks_exact(c)) {
        for ch in 0..c {
            out[ch] = (px[ch] - running_mean[ch]) * scale[ch] + beta[ch];
        }
    }
    Ok(y)
}

/// Folds one batch's statistics into the running estimates.
pub fn update_running<T: Real>(running_mean: &mut [T], running_var: &mut [T], cache: &BnCache<T>) {
    let mo = T::of(BN_MOMENTUM);
    let nu = T::one() - mo;
    for (r, &b) in running_mean.iter_mut().zip(&cache.mean) {
        *r = mo * *r + nu * b;
    }
    for (r, &b) in running_var.iter_mut().zip(&cache.var) {
        *r = mo * *r + nu * b;
    }
}

/// Train-mode reverse pass through the batch statistics:
/// returns `(grad_x, grad_gamma, grad_beta)`.
pub fn batchnorm_backward<T: Real>(
    grad_y: &RealTensor<T>,
    cache: &BnCache<T>,
    gamma: &[T],
) -> Result<(RealTensor<T>, Vec<T>, Vec<T>)> {
    let c = gamma.len();
    if grad_y.len() != cache.xhat.len() || cache.inv_std.len() != c {
        return Err(Error::Contract("batch norm cache does not match gradient".into()));
    }
    let m = grad_y.len() / c;
    let mut gbeta = vec![T::zero(); c];
    let mut ggamma = vec![T::zero(); c];
    for (g, xh) in grad_y.data().chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
        for ch in 0..c {
            gbeta[ch] = gbeta[ch] + g[ch];
            ggamma[ch] = ggamma[ch] + g[ch] * xh[ch];
        }
    }
    // dx = gamma * inv_std / m * (m g - sum g - xhat * sum(g xhat))
    let mf = T::of(m as f64);
    let coef: Vec<T> = (0..c).map(|ch| gamma[ch] * cache.inv_std[ch] / mf).collect();
    let mut gx = RealTensor::zeros(grad_y.dims());
    for ((out, g), xh) in gx
        .data_mut()
        .chunks_exact_mut(c)
        .zip(grad_y.data().chunks_exact(c))
        .zip(cache.xhat.chunks_exact(c))
    {
        for ch in 0..c {
            out[ch] = coef[ch] * (mf * g[ch] - gbeta[ch] - xh[ch] * ggamma[ch]);
        }
    }
    Ok((gx, ggamma, gbeta))
}
