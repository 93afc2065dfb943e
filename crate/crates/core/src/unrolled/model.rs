//! The K-iteration unrolled recursion and its reverse pass.
//!
//! `z_0 = 0`, `x_1 = DC(0)`, then for `n = 1..K-1`: `z_n = D_w(x_n)` and
//! `x_{n+1} = DC(z_n)`, where DC is the exact data-consistency layer or a
//! single steepest-descent step.

use rayon::prelude::*;

use crate::cg::CgConfig;
use crate::dc::{dc_backward, dc_layer, dc_objective, sd_backward, sd_step};
use crate::nn::{
    count_params, denoiser_backward, denoiser_forward, sigmoid, Arch, DenoiserCache, DenoiserGrads, DenoiserParams,
    Mode,
};
use crate::operators::ForwardModel;
use crate::scalar::Real;
use crate::tensor::ComplexTensor;
use crate::unrolled::variant::{DcMode, Sharing, VariantSpec};
use crate::{Error, Result};

/// A forward model together with its measurements.
#[derive(Clone, Debug)]
pub struct Problem<T: Real> {
    pub model: ForwardModel<T>,
    pub b: ComplexTensor<T>,
}

impl<T: Real> Problem<T> {
    pub fn new(model: ForwardModel<T>, b: ComplexTensor<T>) -> Result<Self> {
        if b.dims() != model.data_dims().as_slice() {
            return Err(Error::Dimension(format!(
                "measurements {:?} do not match the model's data dims {:?}",
                b.dims(),
                model.data_dims()
            )));
        }
        Ok(Self { model, b })
    }

    /// Zero-filled reconstruction `A^H b`.
    pub fn zero_filled(&self) -> Result<ComplexTensor<T>> {
        self.model.adjoint(&self.b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnrolledModel<T> {
    pub k: usize,
    pub variant: VariantSpec,
    /// One set with sharing, `K` sets without. Iteration `n` uses set `n - 1`.
    pub params: Vec<DenoiserParams<T>>,
    pub cg: CgConfig,
    pub sd_alpha: T,
}

/// Initial steepest-descent step; the forward model has unit norm.
pub const SD_ALPHA_INIT: f64 = 1.0;

impl<T: Real> UnrolledModel<T> {
    /// Fresh model. Without sharing every set gets its own initialization seed.
    pub fn new(k: usize, variant: VariantSpec, arch: Arch, seed: u64, cg: CgConfig) -> Result<Self> {
        if k == 0 {
            return Err(Error::Parameter("K must be at least 1".into()));
        }
        cg.validate()?;
        let n_sets = match variant.sharing {
            Sharing::WithSharing => 1,
            Sharing::NoSharing => k,
        };
        let params = (0..n_sets)
            .map(|s| DenoiserParams::init(arch, crate::rng::derive(seed, crate::rng::Stream::Init, s as u64)))
            .collect();
        Ok(Self {
            k,
            variant,
            params,
            cg,
            sd_alpha: T::of(SD_ALPHA_INIT),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Parameter("K must be at least 1".into()));
        }
        let want = match self.variant.sharing {
            Sharing::WithSharing => 1,
            Sharing::NoSharing => self.k,
        };
        if self.params.len() != want {
            return Err(Error::Contract(format!(
                "{} needs {want} parameter sets, found {}",
                self.variant,
                self.params.len()
            )));
        }
        self.cg.validate()
    }

    pub fn arch(&self) -> Arch {
        self.params[0].arch()
    }

    /// The shared regularization weight (taken from the first set).
    pub fn lambda(&self) -> T {
        self.params[0].lambda()
    }

    fn set_index(&self, n: usize) -> usize {
        match self.variant.sharing {
            Sharing::WithSharing => 0,
            Sharing::NoSharing => n - 1,
        }
    }

    /// Parameters used by iteration `n` (1-based).
    pub fn denoiser_for(&self, n: usize) -> &DenoiserParams<T> {
        &self.params[self.set_index(n)]
    }

    /// Denoiser parameters plus `lambda`, per set; the SD step adds one.
    pub fn count_params(&self) -> usize {
        self.params.iter().map(count_params).sum::<usize>() + usize::from(self.variant.dc_mode == DcMode::Sd)
    }

    /// Same network unrolled for a different number of iterations.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Parameter("K must be at least 1".into()));
        }
        let mut m = self.clone();
        if self.variant.sharing == Sharing::NoSharing {
            if k > self.params.len() {
                return Err(Error::Parameter(format!(
                    "model without sharing has {} denoisers, cannot unroll {k} iterations",
                    self.params.len()
                )));
            }
            m.params.truncate(k);
        }
        m.k = k;
        Ok(m)
    }

    /// Optimizer-visible parameters: every set in order, then the SD step.
    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for p in &mut self.params {
            out.extend(p.trainable_mut());
        }
        out.push(std::slice::from_mut(&mut self.sd_alpha));
        out
    }

    /// Folds train-mode batch statistics into the BN running averages.
    pub fn absorb_batch_stats(&mut self, cache: &UnrolledCache<T>) {
        for (i, dc) in cache.denoisers.iter().enumerate() {
            let s = self.set_index(i + 1);
            self.params[s].absorb_batch_stats(dc);
        }
    }

    pub fn cast<U: Real>(&self) -> UnrolledModel<U> {
        UnrolledModel {
            k: self.k,
            variant: self.variant,
            params: self.params.iter().map(DenoiserParams::cast).collect(),
            cg: self.cg,
            sd_alpha: U::of(self.sd_alpha.f64()),
        }
    }
}

/// Gradients matching [`UnrolledModel::trainable_mut`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads<T> {
    pub params: Vec<DenoiserGrads<T>>,
    pub sd_alpha: T,
}

impl<T: Real> ModelGrads<T> {
    pub fn zeros_like(m: &UnrolledModel<T>) -> Self {
        Self {
            params: m.params.iter().map(DenoiserGrads::zeros_like).collect(),
            sd_alpha: T::zero(),
        }
    }

    pub fn as_slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for g in &self.params {
            out.extend(g.as_slices());
        }
        out.push(std::slice::from_ref(&self.sd_alpha));
        out
    }
}

/// One snapshot of the recursion: `x_k`, `N_w(x_k)` and `z_k = x_k + N_w(x_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationTrace<T> {
    pub x: ComplexTensor<T>,
    pub noise: ComplexTensor<T>,
    pub z: ComplexTensor<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOptions {
    pub mode: Mode,
    pub trace: bool,
    /// Evaluate the DC objective at each warm start and output.
    pub monitor_dc: bool,
}

impl ForwardOptions {
    pub fn infer() -> Self {
        Self {
            mode: Mode::Infer,
            trace: false,
            monitor_dc: false,
        }
    }

    pub fn train() -> Self {
        Self {
            mode: Mode::Train,
            trace: false,
            monitor_dc: false,
        }
    }
}

/// DC objective before (at the warm start) and after one exact DC layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DcCheck {
    pub at_warm_start: f64,
    pub at_output: f64,
}

/// Everything the reverse pass needs.
#[derive(Clone, Debug)]
pub struct UnrolledCache<T> {
    k: usize,
    batch: usize,
    lambda: T,
    sd_alpha: T,
    /// `xs[n] = x_{n+1}`
    xs: Vec<Vec<ComplexTensor<T>>>,
    /// `zs[n] = z_{n+1}`
    zs: Vec<Vec<ComplexTensor<T>>>,
    denoisers: Vec<DenoiserCache<T>>,
}

#[derive(Clone, Debug)]
pub struct ForwardPass<T> {
    pub x: Vec<ComplexTensor<T>>,
    pub cache: Option<UnrolledCache<T>>,
    /// `trace[i][k-1]` for sample `i`, when requested.
    pub trace: Option<Vec<Vec<IterationTrace<T>>>>,
    pub dc_checks: Vec<DcCheck>,
}

fn dc_step<T: Real>(
    model: &UnrolledModel<T>,
    z: &ComplexTensor<T>,
    p: &Problem<T>,
    exact: bool,
    monitor: bool,
) -> Result<(ComplexTensor<T>, Option<DcCheck>)> {
    let lambda = model.lambda();
    if !exact {
        return Ok((sd_step(z, &p.model, &p.b, model.sd_alpha)?, None));
    }
    let x = dc_layer(z, &p.model, &p.b, lambda, &model.cg)?.x;
    let check = if monitor {
        Some(DcCheck {
            at_warm_start: dc_objective(z, z, &p.model, &p.b, lambda)?,
            at_output: dc_objective(&x, z, &p.model, &p.b, lambda)?,
        })
    } else {
        None
    };
    Ok((x, check))
}

fn dc_batch<T: Real>(
    model: &UnrolledModel<T>,
    zs: &[ComplexTensor<T>],
    problems: &[&Problem<T>],
    exact: bool,
    monitor: bool,
    checks: &mut Vec<DcCheck>,
) -> Result<Vec<ComplexTensor<T>>> {
    let out: Vec<(ComplexTensor<T>, Option<DcCheck>)> = zs
        .par_iter()
        .zip(problems.par_iter())
        .map(|(z, p)| dc_step(model, z, p, exact, monitor))
        .collect::<Result<_>>()?;
    Ok(out
        .into_iter()
        .map(|(x, c)| {
            checks.extend(c);
            x
        })
        .collect())
}

/// Runs the unrolled network on a batch.
pub fn model_forward<T: Real>(
    model: &UnrolledModel<T>,
    problems: &[&Problem<T>],
    opts: ForwardOptions,
) -> Result<ForwardPass<T>> {
    model.validate()?;
    if problems.is_empty() {
        return Err(Error::Dimension("empty batch".into()));
    }
    let dims = problems[0].model.image_dims();
    for p in problems {
        if p.model.image_dims() != dims || p.b.dims() != p.model.data_dims().as_slice() {
            return Err(Error::Dimension(
                "batch mixes image sizes or inconsistent measurements".into(),
            ));
        }
    }
    let train = opts.mode == Mode::Train;
    let sd = model.variant.dc_mode == DcMode::Sd;
    let mut checks = Vec::new();

    let zeros: Vec<ComplexTensor<T>> = problems.iter().map(|_| ComplexTensor::zeros(&dims)).collect();
    let mut x = dc_batch(model, &zeros, problems, true, opts.monitor_dc, &mut checks)?;

    let mut xs = Vec::new();
    let mut zs = Vec::new();
    let mut dcaches = Vec::new();
    let mut trace: Option<Vec<Vec<IterationTrace<T>>>> = opts
        .trace
        .then(|| problems.iter().map(|_| Vec::with_capacity(model.k)).collect());

    for n in 1..model.k {
        let (z, cache) = denoiser_forward(&x, model.denoiser_for(n), opts.mode)?;
        if let Some(t) = trace.as_mut() {
            push_trace(t, &x, &z);
        }
        let next = dc_batch(model, &z, problems, !sd, opts.monitor_dc, &mut checks)?;
        if train {
            xs.push(std::mem::replace(&mut x, next));
            zs.push(z);
            dcaches.push(cache.expect("train mode returns a cache"));
        } else {
            x = next;
        }
    }

    if let Some(t) = trace.as_mut() {
        let (z, _) = denoiser_forward(&x, model.denoiser_for(model.k), Mode::Infer)?;
        push_trace(t, &x, &z);
    }

    let cache = train.then(|| {
        xs.push(x.clone());
        UnrolledCache {
            k: model.k,
            batch: problems.len(),
            lambda: model.lambda(),
            sd_alpha: model.sd_alpha,
            xs,
            zs,
            denoisers: dcaches,
        }
    });
    Ok(ForwardPass {
        x,
        cache,
        trace,
        dc_checks: checks,
    })
}

fn push_trace<T: Real>(t: &mut [Vec<IterationTrace<T>>], x: &[ComplexTensor<T>], z: &[ComplexTensor<T>]) {
    for ((ti, xi), zi) in t.iter_mut().zip(x).zip(z) {
        let noise = ComplexTensor::from_fn(xi.dims(), |j| zi.data()[j] - xi.data()[j]);
        ti.push(IterationTrace {
            x: xi.clone(),
            noise,
            z: zi.clone(),
        });
    }
}

/// Reverse pass through a train-mode forward. Parameter gradients of a
/// shared denoiser accumulate over all its uses; the `lambda` gradient
/// accumulates over every exact DC layer and lands on `theta_lambda` of the
/// first set.
pub fn model_backward<T: Real>(
    grad_x: &[ComplexTensor<T>],
    cache: &UnrolledCache<T>,
    model: &UnrolledModel<T>,
    problems: &[&Problem<T>],
) -> Result<ModelGrads<T>> {
    model.validate()?;
    if cache.k != model.k
        || cache.batch != problems.len()
        || grad_x.len() != cache.batch
        || cache.lambda != model.lambda()
        || cache.sd_alpha != model.sd_alpha
    {
        return Err(Error::Contract("unrolled cache does not match model or batch".into()));
    }
    let sd = model.variant.dc_mode == DcMode::Sd;
    let cfg = model.cg;
    let lambda = model.lambda();
    let alpha = model.sd_alpha;
    let mut grads = ModelGrads::zeros_like(model);
    let mut grad_lambda = T::zero();
    let mut g: Vec<ComplexTensor<T>> = grad_x.to_vec();

    for n in (1..model.k).rev() {
        let x_out = &cache.xs[n];
        let z = &cache.zs[n - 1];
        let per: Vec<(ComplexTensor<T>, T)> = g
            .par_iter()
            .zip(x_out.par_iter())
            .zip(z.par_iter())
            .zip(problems.par_iter())
            .map(|(((gi, xi), zi), p)| {
                if sd {
                    sd_backward(gi, zi, &p.model, &p.b, alpha)
                } else {
                    dc_backward(gi, xi, zi, &p.model, lambda, &cfg)
                }
            })
            .collect::<Result<_>>()?;
        let mut gz = Vec::with_capacity(per.len());
        for (gzi, s) in per {
            if sd {
                grads.sd_alpha = grads.sd_alpha + s;
            } else {
                grad_lambda = grad_lambda + s;
            }
            gz.push(gzi);
        }
        let set = model.set_index(n);
        let (gx, dg) = denoiser_backward(&gz, &cache.denoisers[n - 1], &model.params[set])?;
        grads.params[set].add_assign(&dg);
        g = gx;
    }

    // x_1 = DC(0)
    let first: Vec<T> = g
        .par_iter()
        .zip(cache.xs[0].par_iter())
        .zip(problems.par_iter())
        .map(|((gi, xi), p)| {
            let zero = ComplexTensor::zeros(xi.dims());
            dc_backward(gi, xi, &zero, &p.model, lambda, &cfg).map(|(_, gl)| gl)
        })
        .collect::<Result<_>>()?;
    for gl in first {
        grad_lambda = grad_lambda + gl;
    }
    grads.params[0].theta_lambda = grad_lambda * sigmoid(model.params[0].theta_lambda);
    Ok(grads)
}

/// Inference-mode reconstruction, optionally unrolled for a different `K`.
pub fn reconstruct<T: Real>(
    model: &UnrolledModel<T>,
    problem: &Problem<T>,
    k_override: Option<usize>,
    trace: bool,
) -> Result<(ComplexTensor<T>, Option<Vec<IterationTrace<T>>>)> {
    let m;
    let model = match k_override {
        Some(k) if k != model.k => {
            m = model.with_k(k)?;
            &m
        }
        _ => model,
    };
    let pass = model_forward(
        model,
        &[problem],
        ForwardOptions {
            mode: Mode::Infer,
            trace,
            monitor_dc: false,
        },
    )?;
    let x = pass.x.into_iter().next().expect("batch of one");
    Ok((x, pass.trace.map(|mut t| t.remove(0))))
}
