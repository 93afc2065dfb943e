//! End-to-end training with the two-stage initialization.

use rand::seq::SliceRandom;

use crate::data::metrics::psnr;
use crate::nn::{adam_step, AdamConfig, AdamState, Mode};
use crate::rng::{self, Stream};
use crate::scalar::Real;
use crate::tensor::ComplexTensor;
use crate::unrolled::loss::{loss_mse, loss_mse_grad};
use crate::unrolled::model::{model_backward, model_forward, DcCheck, ForwardOptions, Problem, UnrolledModel};
use crate::unrolled::pretrain::train_pretrained;
use crate::unrolled::variant::TrainingMode;
use crate::{Error, Result};

/// A training or evaluation example.
#[derive(Clone, Debug)]
pub struct Sample<T: Real> {
    pub problem: Problem<T>,
    pub target: ComplexTensor<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    /// Epochs at the full `K` (or denoiser pre-training epochs).
    pub epochs: usize,
    /// Warm-up epochs of the two-iteration network; ignored when `K <= 2`.
    pub stage1_epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Record the DC objective at every exact DC call.
    pub monitor_dc: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            stage1_epochs: 2,
            batch: 4,
            adam: AdamConfig::default(),
            seed: 0,
            monitor_dc: false,
        }
    }
}

/// One row of the training log. Epoch 0 is the untrained model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub val_psnr: f64,
}

/// Relative slack allowed when comparing DC objectives.
pub const DC_MONOTONE_TOL: f64 = 1e-10;

/// Tally of DC objective checks.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DcMonitor {
    pub checks: u64,
    pub violations: u64,
    pub worst_relative_increase: f64,
}

impl DcMonitor {
    pub fn record(&mut self, c: &DcCheck) {
        self.checks += 1;
        let rel = (c.at_output - c.at_warm_start) / c.at_warm_start.abs().max(f64::MIN_POSITIVE);
        if self.checks == 1 || rel > self.worst_relative_increase {
            self.worst_relative_increase = rel;
        }
        if !(rel <= DC_MONOTONE_TOL) {
            self.violations += 1;
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport<T: Real> {
    pub model: UnrolledModel<T>,
    pub adam: AdamState<T>,
    pub metrics: Vec<EpochMetrics>,
    pub dc: DcMonitor,
    /// Set when training stopped early on a non-finite loss or gradient.
    pub aborted: Option<String>,
}

impl<T: Real> TrainReport<T> {
    pub fn metrics_csv(&self) -> String {
        metrics_csv(&self.metrics)
    }
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,loss,val_psnr\n");
    for m in metrics {
        s.push_str(&format!("{},{},{}\n", m.epoch, m.loss, m.val_psnr));
    }
    s
}

/// Per-sample PSNR of inference-mode reconstructions.
pub fn evaluate_psnr<T: Real>(model: &UnrolledModel<T>, samples: &[Sample<T>]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(8) {
        let probs: Vec<&Problem<T>> = chunk.iter().map(|s| &s.problem).collect();
        let pass = model_forward(model, &probs, ForwardOptions::infer())?;
        for (x, s) in pass.x.iter().zip(chunk) {
            out.push(psnr(x, &s.target)?);
        }
    }
    Ok(out)
}

/// Per-sample PSNR of the zero-filled reconstructions `A^H b`.
pub fn baseline_psnr<T: Real>(samples: &[Sample<T>]) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| psnr(&s.problem.zero_filled()?, &s.target))
        .collect()
}

pub(crate) fn mean_or_nan(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub(crate) fn val_psnr<T: Real>(model: &UnrolledModel<T>, val: &[Sample<T>]) -> Result<f64> {
    Ok(mean_or_nan(&evaluate_psnr(model, val)?))
}

/// Trains `model` on `train`, reporting validation PSNR on `val` after every
/// epoch. End-to-end variants first train the two-iteration network from the
/// given initialization, then copy its weights into every iteration of the
/// full network and continue. Pre-trained variants delegate to the denoiser
/// pre-training path. With `epochs == 0` the model is returned untouched.
pub fn train<T: Real>(
    model: UnrolledModel<T>,
    train_set: &[Sample<T>],
    val: &[Sample<T>],
    opts: &TrainOptions,
) -> Result<TrainReport<T>> {
    model.validate()?;
    if train_set.is_empty() {
        return Err(Error::Parameter("training set is empty".into()));
    }
    if opts.batch == 0 {
        return Err(Error::Parameter("batch size must be positive".into()));
    }
    if opts.epochs == 0 {
        return Ok(TrainReport {
            metrics: vec![initial_metrics(&model, train_set, val, opts)?],
            model,
            adam: AdamState::new(opts.adam)?,
            dc: DcMonitor::default(),
            aborted: None,
        });
    }
    if model.variant.training == TrainingMode::PretrainedDenoiser {
        return train_pretrained(model, train_set, val, opts);
    }

    let mut metrics = Vec::new();
    let mut dc = DcMonitor::default();
    let two_stage = model.k > 2 && opts.stage1_epochs > 0;
    let mut model = model;
    let mut epoch = 0;

    if two_stage {
        let mut warm = model.with_k(2)?;
        let mut adam = AdamState::new(opts.adam)?;
        metrics.push(initial_metrics(&warm, train_set, val, opts)?);
        let aborted = run_epochs(
            &mut warm,
            &mut adam,
            train_set,
            val,
            opts,
            opts.stage1_epochs,
            &mut epoch,
            &mut metrics,
            &mut dc,
        )?;
        for p in &mut model.params {
            *p = warm.params[0].clone();
        }
        model.sd_alpha = warm.sd_alpha;
        if aborted.is_some() {
            return Ok(TrainReport {
                model,
                adam,
                metrics,
                dc,
                aborted,
            });
        }
    } else {
        metrics.push(initial_metrics(&model, train_set, val, opts)?);
    }

    let mut adam = AdamState::new(opts.adam)?;
    let aborted = run_epochs(
        &mut model,
        &mut adam,
        train_set,
        val,
        opts,
        opts.epochs,
        &mut epoch,
        &mut metrics,
        &mut dc,
    )?;
    Ok(TrainReport {
        model,
        adam,
        metrics,
        dc,
        aborted,
    })
}

fn initial_metrics<T: Real>(
    model: &UnrolledModel<T>,
    train_set: &[Sample<T>],
    val: &[Sample<T>],
    opts: &TrainOptions,
) -> Result<EpochMetrics> {
    let mut total = 0.0;
    for chunk in train_set.chunks(opts.batch) {
        let probs: Vec<&Problem<T>> = chunk.iter().map(|s| &s.problem).collect();
        let targets: Vec<ComplexTensor<T>> = chunk.iter().map(|s| s.target.clone()).collect();
        let pass = model_forward(model, &probs, ForwardOptions::train())?;
        total += loss_mse(&pass.x, &targets)?;
    }
    Ok(EpochMetrics {
        epoch: 0,
        loss: total / train_set.len() as f64,
        val_psnr: val_psnr(model, val)?,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_epochs<T: Real>(
    model: &mut UnrolledModel<T>,
    adam: &mut AdamState<T>,
    train_set: &[Sample<T>],
    val: &[Sample<T>],
    opts: &TrainOptions,
    epochs: usize,
    epoch: &mut usize,
    metrics: &mut Vec<EpochMetrics>,
    dc: &mut DcMonitor,
) -> Result<Option<String>> {
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for _ in 0..epochs {
        *epoch += 1;
        let snapshot = (model.clone(), adam.clone());
        order.sort_unstable();
        order.shuffle(&mut rng::substream(opts.seed, Stream::Shuffle, *epoch as u64));
        match train_epoch(model, adam, train_set, &order, opts, dc) {
            Ok(loss) => metrics.push(EpochMetrics {
                epoch: *epoch,
                loss,
                val_psnr: val_psnr(model, val)?,
            }),
            Err(Error::Numeric(msg)) => {
                *model = snapshot.0;
                *adam = snapshot.1;
                return Ok(Some(format!("epoch {}: {msg}", *epoch)));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

fn train_epoch<T: Real>(
    model: &mut UnrolledModel<T>,
    adam: &mut AdamState<T>,
    train_set: &[Sample<T>],
    order: &[usize],
    opts: &TrainOptions,
    dc: &mut DcMonitor,
) -> Result<f64> {
    let mut total = 0.0;
    for idx in order.chunks(opts.batch) {
        let probs: Vec<&Problem<T>> = idx.iter().map(|&i| &train_set[i].problem).collect();
        let targets: Vec<ComplexTensor<T>> = idx.iter().map(|&i| train_set[i].target.clone()).collect();
        let fwd = ForwardOptions {
            mode: Mode::Train,
            trace: false,
            monitor_dc: opts.monitor_dc,
        };
        let pass = model_forward(model, &probs, fwd)?;
        pass.dc_checks.iter().for_each(|c| dc.record(c));
        let loss = loss_mse(&pass.x, &targets)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {loss}")));
        }
        total += loss;
        let cache = pass.cache.expect("train mode");
        let grads = model_backward(&loss_mse_grad(&pass.x, &targets)?, &cache, model, &probs)?;
        model.absorb_batch_stats(&cache);
        adam_step(&mut model.trainable_mut(), &grads.as_slices(), adam)?;
        if !(model.sd_alpha > T::zero()) || !model.lambda().is_finite() {
            return Err(Error::Numeric("step size or lambda left the valid range".into()));
        }
    }
    Ok(total / train_set.len() as f64)
}
