//! Experiment configuration: a flat `key = value` text file.
//!
//! Unknown keys are rejected. [`ExperimentConfig::dump`] writes every key, and
//! parsing that output reproduces the same config.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::cg::CgConfig;
use crate::data::DatasetSpec;
use crate::nn::{AdamConfig, Arch};
use crate::scalar::Precision;
use crate::unrolled::checkpoint::parse_kv;
use crate::unrolled::{DcMode, Sharing, TrainOptions, TrainingMode, VariantSpec};
use crate::{Error, Result};

/// Accepted keys with a one-line description each.
pub const KEYS: &[(&str, &str)] = &[
    ("K", "unrolled iterations"),
    ("layers", "convolution layers in the denoiser"),
    ("filters", "feature channels per hidden layer"),
    ("dc_mode", "cg | sd"),
    ("sharing", "ws | ns"),
    ("training", "et | pd"),
    ("accel", "acceleration factor of the sampling mask"),
    ("coils", "receiver coils (1 = single channel)"),
    ("noise_sigma", "measurement noise standard deviation"),
    ("epochs", "training epochs at full K (pre-training epochs for pd)"),
    ("stage1_epochs", "warm-up epochs of the K = 2 network"),
    ("batch", "mini-batch size"),
    ("lr", "Adam learning rate"),
    ("seed", "root seed for every random stream"),
    ("precision", "f32 | f64"),
    ("cg_tol", "relative residual tolerance of CG"),
    ("cg_iters", "CG iteration cap"),
    ("h", "image height"),
    ("w", "image width"),
    ("n_train", "training images"),
    ("n_val", "validation images"),
    ("n_test", "test images"),
    ("texture_amp", "phantom texture amplitude"),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub k: usize,
    pub layers: usize,
    pub filters: usize,
    pub dc_mode: DcMode,
    pub sharing: Sharing,
    pub training: TrainingMode,
    pub accel: f64,
    pub coils: usize,
    pub noise_sigma: f64,
    pub epochs: usize,
    pub stage1_epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub precision: Precision,
    pub cg_tol: f64,
    pub cg_iters: usize,
    pub h: usize,
    pub w: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub texture_amp: f64,
}

impl Default for ExperimentConfig {
    /// Desk-scale defaults.
    fn default() -> Self {
        let d = DatasetSpec::default();
        let cg = CgConfig::default();
        let t = TrainOptions::default();
        Self {
            k: 5,
            layers: 3,
            filters: 16,
            dc_mode: DcMode::Cg,
            sharing: Sharing::WithSharing,
            training: TrainingMode::EndToEnd,
            accel: d.accel,
            coils: d.coils,
            noise_sigma: d.noise_sigma,
            epochs: t.epochs,
            stage1_epochs: t.stage1_epochs,
            batch: t.batch,
            lr: t.adam.lr,
            seed: 0,
            precision: Precision::F32,
            cg_tol: cg.tol,
            cg_iters: cg.max_iters,
            h: d.h,
            w: d.w,
            n_train: d.n_train,
            n_val: d.n_val,
            n_test: d.n_test,
            texture_amp: d.texture_amp,
        }
    }
}

fn parse_val<V: FromStr>(key: &str, raw: &str) -> Result<V> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value for {key}: {raw:?}")))
}

impl ExperimentConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        match key {
            "K" => self.k = parse_val(key, raw)?,
            "layers" => self.layers = parse_val(key, raw)?,
            "filters" => self.filters = parse_val(key, raw)?,
            "dc_mode" => self.dc_mode = raw.trim().parse()?,
            "sharing" => self.sharing = raw.trim().parse()?,
            "training" => self.training = raw.trim().parse()?,
            "accel" => self.accel = parse_val(key, raw)?,
            "coils" => self.coils = parse_val(key, raw)?,
            "noise_sigma" => self.noise_sigma = parse_val(key, raw)?,
            "epochs" => self.epochs = parse_val(key, raw)?,
            "stage1_epochs" => self.stage1_epochs = parse_val(key, raw)?,
            "batch" => self.batch = parse_val(key, raw)?,
            "lr" => self.lr = parse_val(key, raw)?,
            "seed" => self.seed = parse_val(key, raw)?,
            "precision" => self.precision = raw.trim().parse()?,
            "cg_tol" => self.cg_tol = parse_val(key, raw)?,
            "cg_iters" => self.cg_iters = parse_val(key, raw)?,
            "h" => self.h = parse_val(key, raw)?,
            "w" => self.w = parse_val(key, raw)?,
            "n_train" => self.n_train = parse_val(key, raw)?,
            "n_val" => self.n_val = parse_val(key, raw)?,
            "n_test" => self.n_test = parse_val(key, raw)?,
            "texture_amp" => self.texture_amp = parse_val(key, raw)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        fn s(v: impl Display) -> Option<String> {
            Some(v.to_string())
        }
        match key {
            "K" => s(self.k),
            "layers" => s(self.layers),
            "filters" => s(self.filters),
            "dc_mode" => s(self.dc_mode.as_str()),
            "sharing" => s(self.sharing.as_str()),
            "training" => s(self.training.as_str()),
            "accel" => s(self.accel),
            "coils" => s(self.coils),
            "noise_sigma" => s(self.noise_sigma),
            "epochs" => s(self.epochs),
            "stage1_epochs" => s(self.stage1_epochs),
            "batch" => s(self.batch),
            "lr" => s(self.lr),
            "seed" => s(self.seed),
            "precision" => s(self.precision.as_str()),
            "cg_tol" => s(self.cg_tol),
            "cg_iters" => s(self.cg_iters),
            "h" => s(self.h),
            "w" => s(self.w),
            "n_train" => s(self.n_train),
            "n_val" => s(self.n_val),
            "n_test" => s(self.n_test),
            "texture_amp" => s(self.texture_amp),
            _ => None,
        }
    }

    /// Applies `key = value` text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_kv(text, "config")? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Self::parse(&text)
    }

    pub fn dump(&self) -> String {
        KEYS.iter()
            .map(|(k, _)| format!("{k} = {}\n", self.get(k).expect("every listed key has a getter")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        self.arch()?;
        self.variant()?;
        self.cg()?;
        Ok(())
    }

    pub fn arch(&self) -> Result<Arch> {
        Arch::new(self.layers, self.filters)
    }

    pub fn variant(&self) -> Result<VariantSpec> {
        VariantSpec::new(self.dc_mode, self.training, self.sharing)
    }

    pub fn with_variant(mut self, v: VariantSpec) -> Self {
        self.dc_mode = v.dc_mode;
        self.training = v.training;
        self.sharing = v.sharing;
        self
    }

    pub fn cg(&self) -> Result<CgConfig> {
        CgConfig::new(self.cg_tol, self.cg_iters)
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            h: self.h,
            w: self.w,
            n_train: self.n_train,
            n_val: self.n_val,
            n_test: self.n_test,
            accel: self.accel,
            coils: self.coils,
            noise_sigma: self.noise_sigma,
            texture_amp: self.texture_amp,
            seed: self.seed,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            stage1_epochs: self.stage1_epochs,
            batch: self.batch,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            seed: self.seed,
            monitor_dc: false,
        }
    }
}
