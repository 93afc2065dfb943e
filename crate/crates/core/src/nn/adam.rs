//! Adam with bias correction over an ordered list of parameter slices.

use crate::scalar::Real;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
    pub cfg: AdamConfig,
}

impl<T: Real> AdamState<T> {
    pub fn new(cfg: AdamConfig) -> Result<Self> {
        if !(0.0 < cfg.beta1 && cfg.beta1 < 1.0 && 0.0 < cfg.beta2 && cfg.beta2 < 1.0) {
            return Err(Error::Parameter(format!("Adam betas must be in (0, 1): {cfg:?}")));
        }
        if !(cfg.lr >= 0.0) || !(cfg.eps > 0.0) {
            return Err(Error::Parameter(format!("Adam needs lr >= 0 and eps > 0: {cfg:?}")));
        }
        Ok(Self {
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
            cfg,
        })
    }
}

/// One Adam update. Moment buffers are allocated on first use. A non-finite
/// gradient aborts the step with a numeric error and leaves both the
/// parameters and the state untouched.
pub fn adam_step<T: Real>(params: &mut [&mut [T]], grads: &[&[T]], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
        return Err(Error::Dimension("gradients not aligned with parameters".into()));
    }
    if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numeric("non-finite gradient; update skipped".into()));
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len() || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
        return Err(Error::Dimension("Adam state does not match parameter layout".into()));
    }

    state.step += 1;
    let c = state.cfg;
    let t = state.step as i32;
    let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
    let step_size = T::of(c.lr / (1.0 - c.beta1.powi(t)));
    let v_corr = T::of(1.0 / (1.0 - c.beta2.powi(t)));
    let eps = T::of(c.eps);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (T::one() - b1) * gi;
            v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
            p[i] = p[i] - step_size * m[i] / ((v[i] * v_corr).sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut a = vec![1.0, -2.0];
        let mut b = vec![3.0];
        let mut st = AdamState::<f64>::new(AdamConfig::default()).unwrap();
        adam_step(&mut [&mut a, &mut b], &[&[0.0, 0.0], &[0.0]], &mut st).unwrap();
        assert_eq!((a, b, st.step), (vec![1.0, -2.0], vec![3.0], 1));
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut p = vec![0.0; 4];
        let g = [0.5, -3.0, 1e-2, -7e3];
        let cfg = AdamConfig::default();
        let mut st = AdamState::<f64>::new(cfg).unwrap();
        adam_step(&mut [&mut p], &[&g], &mut st).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            assert!((pi + cfg.lr * gi.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = vec![0.3, 0.1];
            let mut st = AdamState::<f64>::new(AdamConfig::default()).unwrap();
            for k in 0..5 {
                let g = [k as f64 - 2.0, 0.7];
                adam_step(&mut [&mut p], &[&g], &mut st).unwrap();
            }
            (p, st)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_skips() {
        let mut p = vec![1.0];
        let mut st = AdamState::<f64>::new(AdamConfig::default()).unwrap();
        let err = adam_step(&mut [&mut p], &[&[f64::NAN]], &mut st);
        assert!(matches!(err, Err(Error::Numeric(_))));
        assert_eq!((p[0], st.step), (1.0, 0));
        assert!(AdamState::<f64>::new(AdamConfig {
            beta1: 1.0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = vec![5.0f32];
        let mut st = AdamState::new(AdamConfig {
            lr: 0.1,
            ..Default::default()
        })
        .unwrap();
        for _ in 0..500 {
            let g = [2.0 * (p[0] - 1.0)];
            adam_step(&mut [&mut p], &[&g], &mut st).unwrap();
        }
        assert!((p[0] - 1.0).abs() < 1e-2);
    }
}
