//! Denoisers pre-trained on Gaussian noise removal, deployed with a
//! descending noise schedule and a tuned regularization weight.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::nn::{adam_step, denoiser_backward, denoiser_forward, AdamState, Arch, DenoiserParams, Mode};
use crate::rng::{self, Stream};
use crate::scalar::{Cplx, Real};
use crate::tensor::ComplexTensor;
use crate::unrolled::loss::{loss_mse, loss_mse_grad};
use crate::unrolled::model::UnrolledModel;
use crate::unrolled::train::{
    evaluate_psnr, mean_or_nan, val_psnr, DcMonitor, EpochMetrics, Sample, TrainOptions, TrainReport,
};
use crate::{Error, Result};

/// Training noise levels, ascending.
pub const NOISE_LEVELS: [f64; 10] = [0.02, 0.04, 0.06, 0.08, 0.10, 0.13, 0.15, 0.17, 0.20, 0.25];

/// Candidate regularization weights for the deployed network.
pub const LAMBDA_GRID: [f64; 9] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0];

/// Samples used to tune `lambda`.
const TUNE_SAMPLES: usize = 32;

/// Deployment order: strongest noise first.
pub fn deployment_schedule() -> Vec<f64> {
    NOISE_LEVELS.iter().rev().copied().collect()
}

/// Noise levels for the `K - 1` denoisers of a `K`-iteration network,
/// spread evenly over the descending schedule.
pub fn schedule_for(k: usize) -> Vec<f64> {
    let full = deployment_schedule();
    let m = k.saturating_sub(1).max(1);
    if m == 1 {
        return vec![full[0]];
    }
    (0..m)
        .map(|i| {
            let pos = i as f64 * (full.len() - 1) as f64 / (m - 1) as f64;
            full[pos.round() as usize]
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct PretrainReport<T> {
    pub denoisers: Vec<DenoiserParams<T>>,
    /// `losses[level][epoch]`: mean per-image denoising loss.
    pub losses: Vec<Vec<f64>>,
}

/// Trains one denoiser per noise level to map `t + sigma n` back to `t`.
pub fn pretrain_denoisers<T: Real>(
    noise_levels: &[f64],
    targets: &[ComplexTensor<T>],
    arch: Arch,
    opts: &TrainOptions,
) -> Result<PretrainReport<T>> {
    if targets.is_empty() {
        return Err(Error::Parameter("pre-training needs at least one image".into()));
    }
    if opts.batch == 0 {
        return Err(Error::Parameter("batch size must be positive".into()));
    }
    if let Some(s) = noise_levels.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::Parameter(format!(
            "noise level must be finite and >= 0, got {s}"
        )));
    }
    let mut denoisers = Vec::with_capacity(noise_levels.len());
    let mut losses = Vec::with_capacity(noise_levels.len());
    for (li, &sigma) in noise_levels.iter().enumerate() {
        let (p, l) = pretrain_one(sigma, li as u64, targets, arch, opts)?;
        denoisers.push(p);
        losses.push(l);
    }
    Ok(PretrainReport { denoisers, losses })
}

fn pretrain_one<T: Real>(
    sigma: f64,
    level: u64,
    targets: &[ComplexTensor<T>],
    arch: Arch,
    opts: &TrainOptions,
) -> Result<(DenoiserParams<T>, Vec<f64>)> {
    let level_seed = rng::derive(opts.seed, Stream::Init, 1000 + level);
    let mut p = DenoiserParams::<T>::init(arch, level_seed);
    let mut adam = AdamState::new(opts.adam)?;
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut order: Vec<usize> = (0..targets.len()).collect();
    let mut losses = Vec::with_capacity(opts.epochs);
    for epoch in 1..=opts.epochs as u64 {
        order.sort_unstable();
        order.shuffle(&mut rng::substream(level_seed, Stream::Shuffle, epoch));
        let mut noise_rng = rng::substream(level_seed, Stream::Noise, epoch);
        let mut total = 0.0;
        for idx in order.chunks(opts.batch) {
            let clean: Vec<ComplexTensor<T>> = idx.iter().map(|&i| targets[i].clone()).collect();
            let noisy: Vec<ComplexTensor<T>> = clean
                .iter()
                .map(|t| {
                    ComplexTensor::from_fn(t.dims(), |j| {
                        let n = Cplx::new(
                            T::of(normal.sample(&mut noise_rng)),
                            T::of(normal.sample(&mut noise_rng)),
                        );
                        t.data()[j] + n
                    })
                })
                .collect();
            let (z, cache) = denoiser_forward(&noisy, &p, Mode::Train)?;
            let cache = cache.expect("train mode");
            let loss = loss_mse(&z, &clean)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite pre-training loss at sigma {sigma}")));
            }
            total += loss;
            let (_, mut g) = denoiser_backward(&loss_mse_grad(&z, &clean)?, &cache, &p)?;
            g.theta_lambda = T::zero();
            p.absorb_batch_stats(&cache);
            adam_step(&mut p.trainable_mut(), &g.as_slices(), &mut adam)?;
        }
        losses.push(total / targets.len() as f64);
    }
    Ok((p, losses))
}

/// Pre-trains the `K - 1` deployed denoisers, installs them without
/// sharing, then picks `lambda` from [`LAMBDA_GRID`] by training-set PSNR.
pub(crate) fn train_pretrained<T: Real>(
    mut model: UnrolledModel<T>,
    train_set: &[Sample<T>],
    val: &[Sample<T>],
    opts: &TrainOptions,
) -> Result<TrainReport<T>> {
    let arch = model.arch();
    let levels = schedule_for(model.k);
    let targets: Vec<ComplexTensor<T>> = train_set.iter().map(|s| s.target.clone()).collect();
    let report = pretrain_denoisers(&levels, &targets, arch, opts)?;

    for (s, set) in model.params.iter_mut().enumerate() {
        *set = report.denoisers[s.min(report.denoisers.len() - 1)].clone();
    }
    let tune = &train_set[..train_set.len().min(TUNE_SAMPLES)];
    let mut best = (f64::NEG_INFINITY, LAMBDA_GRID[0]);
    for &lambda in &LAMBDA_GRID {
        model.params[0].set_lambda(lambda);
        let score = mean_or_nan(&evaluate_psnr(&model, tune)?);
        if score > best.0 {
            best = (score, lambda);
        }
    }
    model.params[0].set_lambda(best.1);
    for p in model.params.iter_mut().skip(1) {
        p.theta_lambda = T::of(crate::nn::softplus_inv(best.1));
    }

    let mut metrics: Vec<EpochMetrics> = (0..opts.epochs)
        .map(|e| EpochMetrics {
            epoch: e + 1,
            loss: mean_or_nan(&report.losses.iter().map(|l| l[e]).collect::<Vec<_>>()),
            val_psnr: f64::NAN,
        })
        .collect();
    let final_val = val_psnr(&model, val)?;
    match metrics.last_mut() {
        Some(m) => m.val_psnr = final_val,
        None => metrics.push(EpochMetrics {
            epoch: 0,
            loss: f64::NAN,
            val_psnr: final_val,
        }),
    }
    Ok(TrainReport {
        model,
        adam: AdamState::new(opts.adam)?,
        metrics,
        dc: DcMonitor::default(),
        aborted: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        let d = deployment_schedule();
        assert_eq!(d, vec![0.25, 0.20, 0.17, 0.15, 0.13, 0.10, 0.08, 0.06, 0.04, 0.02]);
        assert!(d.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(schedule_for(11), d);
        assert_eq!(schedule_for(5), vec![0.25, 0.15, 0.08, 0.02]);
        assert_eq!(schedule_for(1), vec![0.25]);
        assert_eq!(schedule_for(2), vec![0.25]);
    }

    #[test]
    fn zero_noise_stays_identity() {
        let t: Vec<ComplexTensor<f64>> = (0..3)
            .map(|s| ComplexTensor::from_fn(&[8, 8], |i| Cplx::new((i as f64 * 0.1 + s as f64).sin(), 0.2)))
            .collect();
        let opts = TrainOptions {
            epochs: 2,
            batch: 2,
            ..TrainOptions::default()
        };
        let r = pretrain_denoisers(&[0.0], &t, Arch::new(3, 4).unwrap(), &opts).unwrap();
        assert!(r.losses[0].iter().all(|&l| l < 1e-6), "{:?}", r.losses);
    }
}
