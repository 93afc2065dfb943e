//! Checkpoint directories: one MTF file per tensor, `manifest.txt` listing
//! `name dtype dims...` per tensor, and `scalars.txt` with `key = value`
//! lines for the regularization weights, the SD step, the structure and the
//! optimizer state.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::cg::CgConfig;
use crate::mtf::{self, MtfEncode};
use crate::nn::{AdamConfig, AdamState, ConvLayerParams, DenoiserParams};
use crate::scalar::Real;
use crate::tensor::RealTensor;
use crate::unrolled::model::UnrolledModel;
use crate::{Error, Result};

const FORMAT: &str = "modl-checkpoint-1";

fn tensors<T: Real>(model: &UnrolledModel<T>, adam: Option<&AdamState<T>>) -> Vec<(String, RealTensor<T>)> {
    let vec1 = |v: &[T]| RealTensor::new(vec![v.len()], v.to_vec()).expect("1-D");
    let mut out = Vec::new();
    for (s, p) in model.params.iter().enumerate() {
        for (l, layer) in p.layers.iter().enumerate() {
            let pre = format!("set{s}.layer{l}");
            out.push((format!("{pre}.kernels"), layer.kernels.clone()));
            out.push((format!("{pre}.bn_gamma"), vec1(&layer.bn_gamma)));
            out.push((format!("{pre}.bn_beta"), vec1(&layer.bn_beta)));
            out.push((format!("{pre}.bn_running_mean"), vec1(&layer.bn_running_mean)));
            out.push((format!("{pre}.bn_running_var"), vec1(&layer.bn_running_var)));
        }
    }
    if let Some(a) = adam {
        for (i, (m, v)) in a.m.iter().zip(&a.v).enumerate() {
            out.push((format!("adam.m{i}"), vec1(m)));
            out.push((format!("adam.v{i}"), vec1(v)));
        }
    }
    out
}

/// Writes `model` (and optionally the optimizer state) into `dir`, creating it.
pub fn save_checkpoint<T: Real>(
    dir: impl AsRef<Path>,
    model: &UnrolledModel<T>,
    adam: Option<&AdamState<T>>,
) -> Result<()> {
    let dir = dir.as_ref();
    model.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for (name, t) in tensors(model, adam) {
        let dims: Vec<String> = t.dims().iter().map(usize::to_string).collect();
        manifest.push_str(&format!("{name} {} {}\n", t.dtype(), dims.join(" ")));
        mtf::save(&t, dir.join(format!("{name}.mtf")))?;
    }
    let arch = model.arch();
    let mut s = String::new();
    let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
    kv("format", FORMAT.into());
    kv("precision", T::PRECISION.as_str().into());
    kv("K", model.k.to_string());
    kv("variant", model.variant.to_string());
    kv("sets", model.params.len().to_string());
    kv("layers", arch.layers.to_string());
    kv("filters", arch.filters.to_string());
    kv("cg_tol", model.cg.tol.to_string());
    kv("cg_iters", model.cg.max_iters.to_string());
    kv("sd_alpha", model.sd_alpha.f64().to_string());
    for (i, p) in model.params.iter().enumerate() {
        kv(&format!("theta_lambda.{i}"), p.theta_lambda.f64().to_string());
    }
    if let Some(a) = adam {
        kv("adam_step", a.step.to_string());
        kv("adam_lr", a.cfg.lr.to_string());
        kv("adam_beta1", a.cfg.beta1.to_string());
        kv("adam_beta2", a.cfg.beta2.to_string());
        kv("adam_eps", a.cfg.eps.to_string());
        kv("adam_slots", a.m.len().to_string());
    }
    fs::write(dir.join("manifest.txt"), manifest).map_err(|e| Error::io(dir.join("manifest.txt"), e))?;
    fs::write(dir.join("scalars.txt"), s).map_err(|e| Error::io(dir.join("scalars.txt"), e))?;
    Ok(())
}

/// Parses `key = value` lines, ignoring blanks and `#` comments.
pub(crate) fn parse_kv(text: &str, what: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{what} line {}: expected `key = value`", n + 1)))?;
        if out.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!(
                "{what} line {}: duplicate key {}",
                n + 1,
                k.trim()
            )));
        }
    }
    Ok(out)
}

fn get<V: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<V> {
    let raw = kv
        .get(key)
        .ok_or_else(|| Error::Config(format!("checkpoint scalars: missing key {key}")))?;
    raw.parse()
        .map_err(|_| Error::Config(format!("checkpoint scalars: bad value for {key}: {raw:?}")))
}

fn load_vec<T: Real>(dir: &Path, name: &str) -> Result<Vec<T>> {
    Ok(mtf::load(dir.join(format!("{name}.mtf")))?
        .into_real::<T>()?
        .into_data())
}

/// Reads a checkpoint written by [`save_checkpoint`], converting to `T` if needed.
pub fn load_checkpoint<T: Real>(dir: impl AsRef<Path>) -> Result<(UnrolledModel<T>, Option<AdamState<T>>)> {
    let dir = dir.as_ref();
    let p = dir.join("scalars.txt");
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let kv = parse_kv(&text, "scalars.txt")?;
    let format: String = get(&kv, "format")?;
    if format != FORMAT {
        return Err(Error::Config(format!("unsupported checkpoint format {format:?}")));
    }
    let k: usize = get(&kv, "K")?;
    let variant = get::<String>(&kv, "variant")?.parse()?;
    let sets: usize = get(&kv, "sets")?;
    let layers: usize = get(&kv, "layers")?;
    let cg = CgConfig::new(get(&kv, "cg_tol")?, get(&kv, "cg_iters")?)?;
    let mut params = Vec::with_capacity(sets);
    for s in 0..sets {
        let mut ls = Vec::with_capacity(layers);
        for l in 0..layers {
            let pre = format!("set{s}.layer{l}");
            ls.push(ConvLayerParams {
                kernels: mtf::load(dir.join(format!("{pre}.kernels.mtf")))?.into_real::<T>()?,
                bn_gamma: load_vec(dir, &format!("{pre}.bn_gamma"))?,
                bn_beta: load_vec(dir, &format!("{pre}.bn_beta"))?,
                bn_running_mean: load_vec(dir, &format!("{pre}.bn_running_mean"))?,
                bn_running_var: load_vec(dir, &format!("{pre}.bn_running_var"))?,
            });
        }
        params.push(DenoiserParams {
            layers: ls,
            theta_lambda: T::of(get(&kv, &format!("theta_lambda.{s}"))?),
        });
    }
    let model = UnrolledModel {
        k,
        variant,
        params,
        cg,
        sd_alpha: T::of(get(&kv, "sd_alpha")?),
    };
    model.validate()?;
    let adam = if kv.contains_key("adam_step") {
        let slots: usize = get(&kv, "adam_slots")?;
        let mut st = AdamState::new(AdamConfig {
            lr: get(&kv, "adam_lr")?,
            beta1: get(&kv, "adam_beta1")?,
            beta2: get(&kv, "adam_beta2")?,
            eps: get(&kv, "adam_eps")?,
        })?;
        st.step = get(&kv, "adam_step")?;
        for i in 0..slots {
            st.m.push(load_vec(dir, &format!("adam.m{i}"))?);
            st.v.push(load_vec(dir, &format!("adam.v{i}"))?);
        }
        Some(st)
    } else {
        None
    };
    Ok((model, adam))
}
