//! Benchmark harness: variant comparison, iteration sweep and
//! cross-setting evaluation on a synthetic dataset.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::config::ExperimentConfig;
use crate::data::dataset::{Dataset, Split};
use crate::data::image::{save_error_png, save_magnitude_png};
use crate::data::metrics::summarize;
use crate::mask::make_lowpass_mask;
use crate::scalar::Real;
use crate::unrolled::{
    baseline_psnr, evaluate_psnr, reconstruct, train, DcMode, Sample, TrainReport, UnrolledModel, VariantSpec,
};
use crate::{Error, Result};

/// The four compared variants in report order.
pub const VARIANTS: [VariantSpec; 4] = [
    VariantSpec::MODL,
    VariantSpec::SD_ET_WS,
    VariantSpec::CG_PD_NS,
    VariantSpec::CG_ET_NS,
];

/// Label of the zero-filled baseline row.
pub const BASELINE: &str = "AHb";

/// Fixed white level of exported error maps.
pub const ERROR_MAP_SCALE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub method: String,
    /// Per-test-image PSNR in dataset order; empty when the method failed.
    pub psnr: Vec<f64>,
    pub train_seconds: f64,
    pub test_seconds: f64,
    pub error: Option<String>,
}

impl BenchRow {
    pub fn stats(&self) -> (f64, f64, f64, f64) {
        summarize(&self.psnr)
    }

    pub fn mean(&self) -> f64 {
        self.stats().0
    }
}

/// Table of methods evaluated on the test split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Test-record ids, aligned with each row's `psnr`.
    pub ids: Vec<usize>,
}

impl BenchReport {
    pub fn row(&self, method: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("# PSNR peak = max|target| per image; residual = complex difference\n");
        s.push_str("method,mean_psnr,std_psnr,min_psnr,max_psnr,train_seconds,test_seconds\n");
        for r in &self.rows {
            let (m, sd, lo, hi) = r.stats();
            let _ = writeln!(
                s,
                "{},{m},{sd},{lo},{hi},{},{}",
                r.method, r.train_seconds, r.test_seconds
            );
        }
        s
    }

    /// One line per (method, test image); the summary table is recomputable from it.
    pub fn per_sample_csv(&self) -> String {
        let mut s = String::from("method,id,psnr\n");
        for r in &self.rows {
            for (id, p) in self.ids.iter().zip(&r.psnr) {
                let _ = writeln!(s, "{},{id},{p}", r.method);
            }
        }
        s
    }
}

/// Builds a model from `cfg` (with `k` iterations) and trains it on the
/// dataset's train split, validating on its val split.
pub fn train_config<T: Real>(cfg: &ExperimentConfig, k: usize, ds: &Dataset<T>) -> Result<TrainReport<T>> {
    let model = UnrolledModel::new(k, cfg.variant()?, cfg.arch()?, cfg.seed, cfg.cg()?)?;
    train(model, &ds.train, &ds.val, &cfg.train_options())
}

/// A bench entry together with the trained model, when training succeeded.
pub struct TrainedVariant<T: Real> {
    pub variant: VariantSpec,
    pub report: Option<TrainReport<T>>,
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed().as_secs_f64())
}

fn test_row<T: Real>(method: String, model: &UnrolledModel<T>, test: &[Sample<T>], train_seconds: f64) -> BenchRow {
    let (res, secs) = timed(|| evaluate_psnr(model, test));
    match res {
        Ok(psnr) => BenchRow {
            method,
            psnr,
            train_seconds,
            test_seconds: secs,
            error: None,
        },
        Err(e) => BenchRow {
            method,
            psnr: vec![],
            train_seconds,
            test_seconds: secs,
            error: Some(e.to_string()),
        },
    }
}

/// Trains and evaluates each variant under `cfg`. A failing variant yields
/// a row with an error and no statistics instead of aborting the run.
/// `pretrained` supplies already trained models to reuse by variant.
pub fn bench_variants<T: Real>(
    cfg: &ExperimentConfig,
    ds: &Dataset<T>,
    variants: &[VariantSpec],
    pretrained: Vec<TrainedVariant<T>>,
) -> Result<(BenchReport, Vec<TrainedVariant<T>>)> {
    let ids: Vec<usize> = ds.records(Split::Test).map(|r| r.id).collect();
    let mut rows = Vec::new();
    let mut trained = Vec::new();
    let mut pre = pretrained;
    for &v in variants {
        let (report, secs) = match pre.iter().position(|t| t.variant == v) {
            Some(i) => (
                pre.swap_remove(i)
                    .report
                    .ok_or_else(|| Error::Contract("empty pretrained entry".into())),
                0.0,
            ),
            None => timed(|| train_config(&cfg.with_variant(v), cfg.k, ds)),
        };
        let row = match &report {
            Ok(r) => {
                let mut row = test_row(v.to_string(), &r.model, &ds.test, secs);
                if let (None, Some(a)) = (&row.error, &r.aborted) {
                    row.error = Some(format!("training aborted: {a}"));
                }
                row
            }
            Err(e) => BenchRow {
                method: v.to_string(),
                psnr: vec![],
                train_seconds: secs,
                test_seconds: 0.0,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
        trained.push(TrainedVariant {
            variant: v,
            report: report.ok(),
        });
    }
    let (base, secs) = timed(|| baseline_psnr(&ds.test));
    rows.push(BenchRow {
        method: BASELINE.into(),
        psnr: base?,
        train_seconds: 0.0,
        test_seconds: secs,
        error: None,
    });
    Ok((BenchReport { rows, ids }, trained))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub dc_mode: DcMode,
    pub mean_psnr: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("K,dc_mode,mean_psnr\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.k, r.dc_mode.as_str(), r.mean_psnr);
    }
    s
}

/// Trains one model per `(K, dc_mode)` pair with end-to-end training and
/// weight sharing, evaluating each on the test split. `reuse` returns an
/// already trained model for a pair, if any.
pub fn sweep_iterations<T: Real>(
    ks: &[usize],
    modes: &[DcMode],
    cfg: &ExperimentConfig,
    ds: &Dataset<T>,
    mut reuse: impl FnMut(usize, DcMode) -> Option<UnrolledModel<T>>,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &k in ks {
        for &mode in modes {
            let model = match reuse(k, mode) {
                Some(m) => m,
                None => {
                    let mut c = cfg.with_variant(VariantSpec::MODL);
                    c.dc_mode = mode;
                    train_config(&c, k, ds)?.model
                }
            };
            let p = evaluate_psnr(&model, &ds.test)?;
            rows.push(SweepRow {
                k,
                dc_mode: mode,
                mean_psnr: summarize(&p).0,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossRow {
    pub setting: String,
    pub mean_psnr: f64,
    /// Mean PSNR of `A^H b` under the same setting.
    pub baseline_psnr: f64,
}

/// Setting name with the zero-filled suffix used in the CSV.
pub fn baseline_setting(setting: &str) -> String {
    format!("{setting}_{BASELINE}")
}

/// Each setting emits a reconstruction row and an `A^H b` row.
pub fn cross_csv(rows: &[CrossRow]) -> String {
    let mut s = String::from("setting,mean_psnr\n");
    for r in rows {
        let _ = writeln!(s, "{},{}", r.setting, r.mean_psnr);
        let _ = writeln!(s, "{},{}", baseline_setting(&r.setting), r.baseline_psnr);
    }
    s
}

fn eval_setting<T: Real>(
    name: String,
    model: &UnrolledModel<T>,
    samples: &[Sample<T>],
    ids: &[usize],
    png_dir: Option<&Path>,
) -> Result<CrossRow> {
    let mut recon = Vec::with_capacity(samples.len());
    let mut base = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let (x, _) = reconstruct(model, &s.problem, None, false)?;
        let z = s.problem.zero_filled()?;
        recon.push(crate::data::psnr(&x, &s.target)?);
        base.push(crate::data::psnr(&z, &s.target)?);
        if let Some(dir) = png_dir {
            let d = dir.join(&name);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            let id = ids[i];
            save_magnitude_png(&x, d.join(format!("{id:05}_recon.png")))?;
            save_magnitude_png(&z, d.join(format!("{id:05}_ahb.png")))?;
            save_magnitude_png(&s.target, d.join(format!("{id:05}_target.png")))?;
            save_error_png(&x, &s.target, ERROR_MAP_SCALE, d.join(format!("{id:05}_error.png")))?;
        }
    }
    Ok(CrossRow {
        setting: name,
        mean_psnr: summarize(&recon).0,
        baseline_psnr: summarize(&base).0,
    })
}

/// Evaluates one trained model on the test records remeasured at each
/// acceleration (variable-density masks from the records' own seeds) and,
/// optionally, through a centered low-pass mask.
pub fn cross_setting_eval<T: Real>(
    model: &UnrolledModel<T>,
    ds: &Dataset<T>,
    accels: &[f64],
    lowpass: Option<(usize, usize)>,
    png_dir: Option<&Path>,
) -> Result<Vec<CrossRow>> {
    let recs: Vec<_> = ds.records(Split::Test).collect();
    let ids: Vec<usize> = recs.iter().map(|r| r.id).collect();
    let sigma = ds.spec.noise_sigma;
    let mut rows = Vec::new();
    for &a in accels {
        let samples = recs.iter().map(|r| r.sample(a, sigma)).collect::<Result<Vec<_>>>()?;
        rows.push(eval_setting(format!("accel_{a}"), model, &samples, &ids, png_dir)?);
    }
    if let Some((kh, kw)) = lowpass {
        let samples = recs
            .iter()
            .map(|r| r.sample_with_mask(make_lowpass_mask(ds.spec.h, ds.spec.w, kh, kw)?, sigma))
            .collect::<Result<Vec<_>>>()?;
        rows.push(eval_setting(
            format!("lowpass_{kh}x{kw}"),
            model,
            &samples,
            &ids,
            png_dir,
        )?);
    }
    Ok(rows)
}
