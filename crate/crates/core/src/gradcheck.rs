//! Central finite-difference checks of every hand-written reverse pass.
//!
//! Each check contracts the block output with a fixed random weight `r`
//! (`L = sum r . out`, real and imaginary parts as separate variables), then
//! compares the analytic gradient of `L` entry by entry with
//! `(L(p + h) - L(p - h)) / 2h`. The relative error of one entry is
//! `|a - f| / max(|a|, |f|, 1e-3 max_j |f_j|)`, so entries whose true
//! gradient is tiny are judged against the scale of their tensor.

use rand::Rng as _;

use crate::cg::CgConfig;
use crate::coils::make_synthetic_coils;
use crate::dc::{dc_backward_lambda, dc_backward_z, dc_layer, sd_backward, sd_step};
use crate::mask::make_vd_mask;
use crate::nn::batchnorm::{batchnorm_backward, batchnorm_train};
use crate::nn::conv::{conv2d_backward, conv2d_forward};
use crate::nn::relu::{relu, relu_backward};
use crate::nn::{denoiser_backward, denoiser_forward, Arch, DenoiserParams, Mode};
use crate::operators::ForwardModel;
use crate::rng::{self, Stream};
use crate::scalar::Cplx;
use crate::tensor::{ComplexTensor, RealTensor};
use crate::unrolled::{
    loss_mse, loss_mse_grad, model_backward, model_forward, ForwardOptions, Problem, UnrolledModel, VariantSpec,
};
use crate::Result;

/// Pass threshold on the maximum relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;
const STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradRow {
    pub component: String,
    pub param: String,
    pub max_rel_err: f64,
    pub pass: bool,
}

pub fn rows_csv(rows: &[GradRow]) -> String {
    let mut s = String::from("component,param,max_rel_err,pass\n");
    for r in rows {
        s.push_str(&format!("{},{},{:e},{}\n", r.component, r.param, r.max_rel_err, r.pass));
    }
    s
}

/// Maximum relative error between analytic and numeric gradients.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, f)| {
            let d = a.abs().max(f.abs()).max(1e-3 * scale).max(1e-300);
            (a - f).abs() / d
        })
        .fold(0.0, f64::max)
}

/// Central differences of `loss(j, delta)` (entry `j` shifted by `delta`).
fn numeric(n: usize, mut loss: impl FnMut(usize, f64) -> Result<f64>) -> Result<Vec<f64>> {
    (0..n)
        .map(|j| Ok((loss(j, STEP)? - loss(j, -STEP)?) / (2.0 * STEP)))
        .collect()
}

fn row(component: &str, param: &str, analytic: &[f64], numeric: &[f64]) -> GradRow {
    let e = max_rel_err(analytic, numeric);
    GradRow {
        component: component.into(),
        param: param.into(),
        max_rel_err: e,
        pass: e <= GRADCHECK_TOL,
    }
}

struct Src(rng::Rng);

impl Src {
    fn new(seed: u64, idx: u64) -> Self {
        Self(rng::substream(seed, Stream::Gradcheck, idx))
    }
    fn real(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.0.random_range(-1.0..1.0)).collect()
    }
    fn tensor(&mut self, dims: &[usize]) -> RealTensor<f64> {
        let n = dims.iter().product();
        RealTensor::new(dims.to_vec(), self.real(n)).expect("dims")
    }
    fn image(&mut self, h: usize, w: usize) -> ComplexTensor<f64> {
        ComplexTensor::from_fn(&[h, w], |_| {
            Cplx::new(self.0.random_range(-1.0..1.0), self.0.random_range(-1.0..1.0))
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cdot(a: &ComplexTensor<f64>, r: &ComplexTensor<f64>) -> f64 {
    a.data()
        .iter()
        .zip(r.data())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

/// Complex tensor as interleaved (re, im) reals.
fn flat(t: &ComplexTensor<f64>) -> Vec<f64> {
    t.data().iter().flat_map(|c| [c.re, c.im]).collect()
}

fn bump(t: &ComplexTensor<f64>, j: usize, d: f64) -> ComplexTensor<f64> {
    let mut t = t.clone();
    let c = &mut t.data_mut()[j / 2];
    if j % 2 == 0 {
        c.re += d;
    } else {
        c.im += d;
    }
    t
}

fn bump_real(t: &RealTensor<f64>, j: usize, d: f64) -> RealTensor<f64> {
    let mut t = t.clone();
    t.data_mut()[j] += d;
    t
}

fn check_conv(seed: u64) -> Result<Vec<GradRow>> {
    let mut s = Src::new(seed, 1);
    let x = s.tensor(&[2, 8, 8, 3]);
    let k = s.tensor(&[3, 3, 3, 4]);
    let r = s.tensor(&[2, 8, 8, 4]);
    let (gx, gk) = conv2d_backward(&x, &k, &r)?;
    let l = |x: &RealTensor<f64>, k: &RealTensor<f64>| conv2d_forward(x, k).map(|y| dot(y.data(), r.data()));
    let nk = numeric(k.len(), |j, d| l(&x, &bump_real(&k, j, d)))?;
    let nx = numeric(x.len(), |j, d| l(&bump_real(&x, j, d), &k))?;
    Ok(vec![
        row("conv", "kernels", gk.data(), &nk),
        row("conv", "input", gx.data(), &nx),
    ])
}

fn check_batchnorm(seed: u64) -> Result<Vec<GradRow>> {
    let mut s = Src::new(seed, 2);
    let x = s.tensor(&[2, 8, 8, 3]);
    let gamma: Vec<f64> = s.real(3).iter().map(|v| 1.0 + 0.5 * v).collect();
    let beta = s.real(3);
    let r = s.tensor(&[2, 8, 8, 3]);
    let (_, cache) = batchnorm_train(&x, &gamma, &beta)?;
    let (gx, gg, gb) = batchnorm_backward(&r, &cache, &gamma)?;
    let l = |x: &RealTensor<f64>, g: &[f64], b: &[f64]| batchnorm_train(x, g, b).map(|(y, _)| dot(y.data(), r.data()));
    let bump_vec = |v: &[f64], j: usize, d: f64| {
        let mut v = v.to_vec();
        v[j] += d;
        v
    };
    let nx = numeric(x.len(), |j, d| l(&bump_real(&x, j, d), &gamma, &beta))?;
    let ng = numeric(3, |j, d| l(&x, &bump_vec(&gamma, j, d), &beta))?;
    let nb = numeric(3, |j, d| l(&x, &gamma, &bump_vec(&beta, j, d)))?;
    Ok(vec![
        row("batchnorm", "input", gx.data(), &nx),
        row("batchnorm", "gamma", &gg, &ng),
        row("batchnorm", "beta", &gb, &nb),
    ])
}

fn check_relu(seed: u64) -> Result<Vec<GradRow>> {
    let mut s = Src::new(seed, 3);
    // keep inputs away from the kink
    let x: Vec<f64> = s.real(128).iter().map(|v| v + 0.1 * v.signum()).collect();
    let r = s.real(128);
    let mut g = r.clone();
    relu_backward(&mut g, &x);
    let n = numeric(x.len(), |j, d| {
        let mut x = x.clone();
        x[j] += d;
        Ok(dot(&relu(&x), &r))
    })?;
    Ok(vec![row("relu", "input", &g, &n)])
}

fn check_denoiser(seed: u64) -> Result<Vec<GradRow>> {
    let mut s = Src::new(seed, 4);
    let arch = Arch::new(3, 4)?;
    let mut p = DenoiserParams::<f64>::init(arch, rng::derive(seed, Stream::Gradcheck, 40));
    // make every block active, including the final scale
    for l in &mut p.layers {
        l.bn_gamma = s.real(l.bn_gamma.len()).iter().map(|v| 1.0 + 0.3 * v).collect();
        l.bn_beta = s.real(l.bn_beta.len()).iter().map(|v| 0.2 * v).collect();
    }
    let x = vec![s.image(8, 8), s.image(8, 8)];
    let r = vec![s.image(8, 8), s.image(8, 8)];
    let (_, cache) = denoiser_forward(&x, &p, Mode::Train)?;
    let (gx, grads) = denoiser_backward(&r, cache.as_ref().expect("train"), &p)?;
    let loss = |x: &[ComplexTensor<f64>], p: &DenoiserParams<f64>| -> Result<f64> {
        let (z, _) = denoiser_forward(x, p, Mode::Train)?;
        Ok(z.iter().zip(&r).map(|(a, b)| cdot(a, b)).sum())
    };
    let mut rows = Vec::new();
    let ga = grads.as_slices();
    let mut slot = 0;
    for l in 0..arch.layers {
        for name in ["kernels", "gamma", "beta"] {
            let n = ga[slot].len();
            let num = numeric(n, |j, d| {
                let mut q = p.clone();
                q.trainable_mut()[slot][j] += d;
                loss(&x, &q)
            })?;
            rows.push(row("denoiser", &format!("layer{l}.{name}"), ga[slot], &num));
            slot += 1;
        }
    }
    let analytic: Vec<f64> = gx.iter().flat_map(flat).collect();
    let num = numeric(analytic.len(), |j, d| {
        let mut xs = x.clone();
        let per = 2 * 64;
        xs[j / per] = bump(&xs[j / per], j % per, d);
        loss(&xs, &p)
    })?;
    rows.push(row("denoiser", "input", &analytic, &num));
    Ok(rows)
}

fn models(seed: u64) -> Result<Vec<(&'static str, ForwardModel<f64>)>> {
    let mask = make_vd_mask(16, 16, 2.5, rng::derive(seed, Stream::Mask, 5))?;
    // gradient checks run at 8x8: carve the top-left-centered block of a 16x16 mask
    let small = crate::mask::SamplingMask::new(
        8,
        8,
        (0..64).map(|i| mask.get(4 + i / 8, 4 + i % 8)).collect(),
        mask.acceleration(),
        mask.seed(),
    )?;
    let coils = make_synthetic_coils::<f64>(8, 8, 2, rng::derive(seed, Stream::Coils, 5))?;
    Ok(vec![
        ("single_channel", ForwardModel::single_channel(small.clone())),
        ("multichannel", ForwardModel::multi_channel(small, coils)?),
    ])
}

fn check_dc(seed: u64) -> Result<Vec<GradRow>> {
    let cfg = CgConfig::gradient_check();
    let tight = CgConfig::new(1e-12, 500)?;
    let mut rows = Vec::new();
    for (i, (name, model)) in models(seed)?.into_iter().enumerate() {
        let mut s = Src::new(seed, 10 + i as u64);
        let b = model.forward(&s.image(8, 8))?;
        let z = s.image(8, 8);
        let r = s.image(8, 8);
        let lambda = 0.3;
        let l = |z: &ComplexTensor<f64>, lam: f64| -> Result<f64> {
            Ok(cdot(&dc_layer(z, &model, &b, lam, &tight)?.x, &r))
        };
        let gz = dc_backward_z(&r, &model, lambda, &cfg)?;
        let num = numeric(2 * z.len(), |j, d| l(&bump(&z, j, d), lambda))?;
        rows.push(row("dc_backward_z", &format!("z_{name}"), &flat(&gz), &num));

        let x = dc_layer(&z, &model, &b, lambda, &tight)?.x;
        let gl = dc_backward_lambda(&r, &x, &z, &model, &cfg, lambda)?;
        let num = numeric(1, |_, d| l(&z, lambda + d))?;
        rows.push(row("dc_backward_lambda", &format!("lambda_{name}"), &[gl], &num));

        let alpha = 0.7;
        let ls = |z: &ComplexTensor<f64>, a: f64| -> Result<f64> { Ok(cdot(&sd_step(z, &model, &b, a)?, &r)) };
        let (gz, ga) = sd_backward(&r, &z, &model, &b, alpha)?;
        let num = numeric(2 * z.len(), |j, d| ls(&bump(&z, j, d), alpha))?;
        rows.push(row("sd_step", &format!("z_{name}"), &flat(&gz), &num));
        let num = numeric(1, |_, d| ls(&z, alpha + d))?;
        rows.push(row("sd_step", &format!("alpha_{name}"), &[ga], &num));
    }
    Ok(rows)
}

fn param_names(model: &UnrolledModel<f64>) -> Vec<String> {
    let mut out = Vec::new();
    for s in 0..model.params.len() {
        for l in 0..model.params[s].layers.len() {
            for n in ["kernels", "gamma", "beta"] {
                out.push(format!("set{s}.layer{l}.{n}"));
            }
        }
        out.push(format!("set{s}.theta_lambda"));
    }
    out.push("sd_alpha".into());
    out
}

/// End-to-end check of a `K = 2` network on two 8x8 samples.
fn check_unrolled(seed: u64) -> Result<Vec<GradRow>> {
    let mut rows = Vec::new();
    let cases = [
        ("unrolled_k2_cg", VariantSpec::MODL, 0usize),
        ("unrolled_k2_cg", VariantSpec::MODL, 1),
        ("unrolled_k2_sd", VariantSpec::SD_ET_WS, 0),
        ("unrolled_k2_cg_ns", VariantSpec::CG_ET_NS, 1),
    ];
    let ms = models(seed)?;
    for (ci, (component, variant, mi)) in cases.into_iter().enumerate() {
        let (mname, fm) = &ms[mi];
        let mut s = Src::new(seed, 20 + ci as u64);
        let mut model = UnrolledModel::<f64>::new(
            2,
            variant,
            Arch::new(3, 4)?,
            rng::derive(seed, Stream::Gradcheck, 50 + ci as u64),
            CgConfig::new(1e-12, 500)?,
        )?;
        for p in &mut model.params {
            for l in &mut p.layers {
                l.bn_gamma = s.real(l.bn_gamma.len()).iter().map(|v| 1.0 + 0.3 * v).collect();
                l.bn_beta = s.real(l.bn_beta.len()).iter().map(|v| 0.2 * v).collect();
            }
            p.set_lambda(0.2);
        }
        model.sd_alpha = 0.8;
        let targets = vec![s.image(8, 8), s.image(8, 8)];
        let problems: Vec<Problem<f64>> = targets
            .iter()
            .map(|t| {
                let n = s.image(8, 8);
                let noisy = ComplexTensor::from_fn(&[8, 8], |i| t.data()[i] + n.data()[i] * 0.05);
                Problem::new(fm.clone(), fm.forward(&noisy)?)
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&Problem<f64>> = problems.iter().collect();
        let loss = |m: &UnrolledModel<f64>| -> Result<f64> {
            let pass = model_forward(m, &refs, ForwardOptions::train())?;
            loss_mse(&pass.x, &targets)
        };
        let pass = model_forward(&model, &refs, ForwardOptions::train())?;
        let g = model_backward(
            &loss_mse_grad(&pass.x, &targets)?,
            pass.cache.as_ref().expect("train"),
            &model,
            &refs,
        )?;
        let names = param_names(&model);
        let comp = format!("{component}_{mname}");
        for (slot, ga) in g.as_slices().into_iter().enumerate() {
            if slot + 1 == names.len() && variant.dc_mode == crate::unrolled::DcMode::Cg {
                continue;
            }
            let num = numeric(ga.len(), |j, d| {
                let mut m = model.clone();
                m.trainable_mut()[slot][j] += d;
                loss(&m)
            })?;
            rows.push(row(&comp, &names[slot], ga, &num));
        }
    }
    Ok(rows)
}

/// Runs every suite. Rows are ordered by component.
pub fn run_all(seed: u64) -> Result<Vec<GradRow>> {
    let mut rows = check_conv(seed)?;
    rows.extend(check_batchnorm(seed)?);
    rows.extend(check_relu(seed)?);
    rows.extend(check_denoiser(seed)?);
    rows.extend(check_dc(seed)?);
    rows.extend(check_unrolled(seed)?);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_err_scale_floor() {
        assert_eq!(max_rel_err(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        // a tiny absolute miss on a near-zero entry is judged against the tensor scale
        assert!(max_rel_err(&[1.0, 1e-9], &[1.0, 0.0]) < 1e-5);
        assert!((max_rel_err(&[2.0], &[1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn layer_suites_pass() {
        for rows in [
            check_conv(3).unwrap(),
            check_batchnorm(3).unwrap(),
            check_relu(3).unwrap(),
        ] {
            for r in rows {
                assert!(r.pass, "{r:?}");
            }
        }
    }
}
