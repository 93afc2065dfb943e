//! Acceptance suite. Runs every criterion in order, prints one
//! `PASS`/`FAIL` line per criterion and exits nonzero if any failed.
//!
//! Criteria 5-10 share one desk-scale dataset and reuse trained models:
//! the criterion-5 network is the MoDL entry of the variant bench, the K = 5
//! entries of the iteration sweep and the model of the cross-setting check.

mod common;

use std::fs;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use modl::config::ExperimentConfig;
use modl::data::{
    bench_variants, cross_setting_eval, make_dataset, sweep_iterations, BenchReport, Dataset, TrainedVariant, BASELINE,
    VARIANTS,
};
use modl::dc::{dc_analytic, dc_layer_with, DcSolver};
use modl::gradcheck::{run_all, GRADCHECK_TOL};
use modl::nn::{count_params_arch, Arch};
use modl::rng::{self, Stream};
use modl::unrolled::{baseline_psnr, save_checkpoint, train, DcMode, TrainReport, UnrolledModel, VariantSpec};
use modl::{
    make_lowpass_mask, make_synthetic_coils, make_vd_mask, CgConfig, ComplexTensor, Cplx, ForwardModel, Precision,
};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn line(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
    let _ = out.flush();
}

fn image(h: usize, w: usize, r: &mut impl Rng) -> ComplexTensor<f64> {
    ComplexTensor::from_fn(&[h, w], |_| {
        Cplx::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
    })
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let (h, w) = (64, 64);
    let vd = make_vd_mask(h, w, 4.0, 1).unwrap();
    let lp = make_lowpass_mask(h, w, 32, 32).unwrap();
    let coils = make_synthetic_coils::<f64>(h, w, 4, 1).unwrap();
    let kinds = [
        ("single/vd", ForwardModel::single_channel(vd.clone())),
        ("single/lowpass", ForwardModel::single_channel(lp.clone())),
        ("4coil/vd", ForwardModel::multi_channel(vd, coils.clone()).unwrap()),
        ("4coil/lowpass", ForwardModel::multi_channel(lp, coils).unwrap()),
    ];
    let mut r = rng::substream(1, Stream::Gradcheck, 100);
    let mut worst = 0.0f64;
    for (_, m) in &kinds {
        for _ in 0..100 {
            let x = image(h, w, &mut r);
            let y = ComplexTensor::from_fn(&m.data_dims(), |_| {
                Cplx::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
            });
            let d = (m.forward(&x).unwrap().dot(&y) - x.dot(&m.adjoint(&y).unwrap())).norm();
            worst = worst.max(d / (x.norm() * y.norm()));
        }
    }
    let mut dense_worst = 0.0f64;
    for seed in 0..4 {
        let mut mr = rng::substream(seed, Stream::Mask, 0);
        let mask = random_mask(4, 4, 0.5, &mut mr);
        let c = make_synthetic_coils::<f64>(4, 4, 4, seed).unwrap();
        for m in [
            ForwardModel::single_channel(mask.clone()),
            ForwardModel::multi_channel(mask, c).unwrap(),
        ] {
            let a = dense_forward(m.mask(), coil_vecs(&m).as_deref());
            let x = image(4, 4, &mut r);
            dense_worst = dense_worst.max(max_abs_diff(m.forward(&x).unwrap().data(), &matvec(&a, x.data())));
            let y = ComplexTensor::from_fn(&m.data_dims(), |_| Cplx::new(r.random_range(-1.0..1.0), 0.5));
            dense_worst = dense_worst.max(max_abs_diff(
                m.adjoint(&y).unwrap().data(),
                &adjoint_matvec(&a, y.data()),
            ));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && dense_worst <= 1e-10 && secs < 10.0,
        format!("adjoint rel {worst:.1e} (<= 1e-6), dense 4x4 {dense_worst:.1e} (<= 1e-10), {secs:.2}s (< 10s)"),
    )
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut r = rng::substream(2, Stream::Gradcheck, 200);
    let cg = CgConfig::new(1e-12, 200).unwrap();
    let mut worst = 0.0f64;
    for i in 0..50 {
        let m = ForwardModel::<f64>::single_channel(make_vd_mask(32, 32, 2.0 + (i % 5) as f64, i).unwrap());
        let z = image(32, 32, &mut r);
        let b = m.forward(&image(32, 32, &mut r)).unwrap();
        let lambda = r.random_range(0.01..2.0);
        let a = dc_analytic(&z, &m, &b, lambda).unwrap();
        let c = dc_layer_with(&z, &m, &b, lambda, &cg, DcSolver::Cg).unwrap().x;
        let d = a
            .data()
            .iter()
            .zip(c.data())
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max);
        worst = worst.max(d);
    }
    let coils = make_synthetic_coils::<f64>(8, 8, 2, 5).unwrap();
    let m = ForwardModel::multi_channel(random_mask(8, 8, 0.35, &mut r), coils).unwrap();
    let a = dense_forward(m.mask(), coil_vecs(&m).as_deref());
    let (z, b, lambda) = (image(8, 8, &mut r), m.forward(&image(8, 8, &mut r)).unwrap(), 0.2);
    let mut rhs = adjoint_matvec(&a, b.data());
    for (v, zv) in rhs.iter_mut().zip(z.data()) {
        *v += lambda * zv;
    }
    let oracle = solve(dense_q(&a, lambda), rhs);
    let got = dc_layer_with(&z, &m, &b, lambda, &CgConfig::new(1e-14, 500).unwrap(), DcSolver::Cg)
        .unwrap()
        .x;
    let dense = max_abs_diff(got.data(), &oracle);
    let secs = t.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && dense <= 1e-8 && secs < 30.0,
        format!(
            "analytic vs CG {worst:.1e} (<= 1e-6), multichannel vs dense {dense:.1e} (<= 1e-8), {secs:.2}s (< 30s)"
        ),
    )
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let rows = run_all(0).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{}/{}", r.component, r.param))
        .collect();
    let worst = rows.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let components: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.component.as_str()).collect();
    check(
        failed.is_empty() && secs < 300.0,
        format!(
            "{} rows over {} components, worst {worst:.1e} (<= {GRADCHECK_TOL:e}), {secs:.1}s; failed: {failed:?}",
            rows.len(),
            components.len()
        ),
    )
}

fn criterion_4() -> Outcome {
    let m = UnrolledModel::<f32>::new(1, VariantSpec::MODL, Arch::PAPER, 0, CgConfig::default()).unwrap();
    let per_layer: Vec<usize> = m.params[0].layers.iter().map(|l| l.count()).collect();
    let total = m.count_params();
    let ns = UnrolledModel::<f32>::new(10, VariantSpec::CG_ET_NS, Arch::PAPER, 0, CgConfig::default())
        .unwrap()
        .count_params();
    check(
        total == 113_929
            && count_params_arch(Arch::PAPER) == total
            && per_layer == [1408, 37120, 37120, 37120, 1160]
            && ns == 1_139_290,
        format!("WS {total}, layers {per_layer:?}, NS K=10 {ns}"),
    )
}

/// Shared desk-scale state for criteria 5-10.
struct Desk {
    cfg: ExperimentConfig,
    ds: Dataset<f64>,
    run: TrainReport<f64>,
    train_seconds: f64,
}

fn desk_config() -> ExperimentConfig {
    ExperimentConfig {
        k: 5,
        layers: 3,
        filters: 16,
        accel: 4.0,
        coils: 4,
        noise_sigma: 0.01,
        n_train: 200,
        n_val: 20,
        n_test: 20,
        epochs: 8,
        stage1_epochs: 2,
        batch: 4,
        precision: Precision::F64,
        seed: 0,
        ..ExperimentConfig::default()
    }
}

fn train_modl(cfg: &ExperimentConfig, ds: &Dataset<f64>) -> (TrainReport<f64>, f64) {
    let t = Instant::now();
    let model = UnrolledModel::new(
        cfg.k,
        VariantSpec::MODL,
        cfg.arch().unwrap(),
        cfg.seed,
        cfg.cg().unwrap(),
    )
    .unwrap();
    let mut opts = cfg.train_options();
    opts.monitor_dc = true;
    let rep = train(model, &ds.train, &ds.val, &opts).unwrap();
    (rep, t.elapsed().as_secs_f64())
}

fn criterion_5(desk: &Desk) -> Outcome {
    let m = &desk.run.metrics;
    let base = baseline_psnr(&desk.ds.val).unwrap();
    let base = base.iter().sum::<f64>() / base.len() as f64;
    let last = m.last().unwrap();
    let gain = last.val_psnr - base;
    let drop = 1.0 - last.loss / m[0].loss;
    check(
        desk.run.aborted.is_none() && gain >= 3.0 && drop >= 0.5 && desk.train_seconds < 1800.0,
        format!(
            "val PSNR {:.2} dB vs A^H b {base:.2} dB (+{gain:.2}, need +3), loss {:.3} -> {:.3} (-{:.0}%, need 50%), {:.0}s (< 1800s)",
            last.val_psnr,
            m[0].loss,
            last.loss,
            100.0 * drop,
            desk.train_seconds
        ),
    )
}

fn criterion_9(desk: &Desk) -> Outcome {
    let dc = desk.run.dc;
    check(
        dc.checks > 0 && dc.violations == 0,
        format!(
            "{} DC calls, {} violations, worst relative change {:.1e}",
            dc.checks, dc.violations, dc.worst_relative_increase
        ),
    )
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn criterion_10(desk: &Desk) -> Outcome {
    let (again, _) = train_modl(&desk.cfg, &desk.ds);
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    save_checkpoint(&a, &desk.run.model, Some(&desk.run.adam)).unwrap();
    save_checkpoint(&b, &again.model, Some(&again.adam)).unwrap();
    let files_equal = dir_bytes(&a) == dir_bytes(&b);
    let bits = |r: &TrainReport<f64>| -> Vec<u64> {
        r.metrics
            .iter()
            .flat_map(|m| [m.epoch as u64, m.loss.to_bits(), m.val_psnr.to_bits()])
            .collect()
    };
    let metrics_equal = bits(&desk.run) == bits(&again);
    check(
        files_equal && metrics_equal,
        format!(
            "checkpoint files identical: {files_equal}, metrics identical: {metrics_equal} ({} files)",
            dir_bytes(&a).len()
        ),
    )
}

fn criterion_7(desk: &Desk) -> (Outcome, Vec<TrainedVariant<f64>>) {
    let reuse = vec![TrainedVariant {
        variant: VariantSpec::MODL,
        report: Some(desk.run.clone()),
    }];
    let (rep, trained): (BenchReport, _) = bench_variants(&desk.cfg, &desk.ds, &VARIANTS, reuse).unwrap();
    let mean = |m: &str| rep.row(m).map_or(f64::NAN, |r| r.mean());
    let modl = mean("CG-ET-WS");
    let base = mean(BASELINE);
    let others = ["SD-ET-WS", "CG-PD-NS", "CG-ET-NS"];
    let errors: Vec<String> = rep.rows.iter().filter_map(|r| r.error.clone()).collect();
    let ok = errors.is_empty() && others.iter().all(|o| modl >= mean(o)) && rep.rows.iter().all(|r| r.mean() >= base);
    let table: Vec<String> = rep
        .rows
        .iter()
        .map(|r| format!("{} {:.2}", r.method, r.mean()))
        .collect();
    (check(ok, format!("{}; errors: {errors:?}", table.join(", "))), trained)
}

fn criterion_6(desk: &Desk, trained: &[TrainedVariant<f64>]) -> Outcome {
    let t = Instant::now();
    let sd5 = trained
        .iter()
        .find(|t| t.variant == VariantSpec::SD_ET_WS)
        .and_then(|t| t.report.as_ref())
        .map(|r| r.model.clone());
    let modl = desk.run.model.clone();
    let rows = sweep_iterations(
        &[1, 3, 5],
        &[DcMode::Cg, DcMode::Sd],
        &desk.cfg,
        &desk.ds,
        |k, mode| match (k, mode) {
            (5, DcMode::Cg) => Some(modl.clone()),
            (5, DcMode::Sd) => sd5.clone(),
            _ => None,
        },
    )
    .unwrap();
    let secs = t.elapsed().as_secs_f64();
    let p = |k: usize, m: DcMode| rows.iter().find(|r| r.k == k && r.dc_mode == m).unwrap().mean_psnr;
    let (c1, c3, c5) = (p(1, DcMode::Cg), p(3, DcMode::Cg), p(5, DcMode::Cg));
    let cg_over_sd = [1, 3, 5].iter().all(|&k| p(k, DcMode::Cg) >= p(k, DcMode::Sd));
    check(
        c5 >= c3 && c3 >= c1 - 0.2 && cg_over_sd && secs < 7200.0,
        format!(
            "CG K=1/3/5: {c1:.2}/{c3:.2}/{c5:.2}; SD K=1/3/5: {:.2}/{:.2}/{:.2}; {secs:.0}s",
            p(1, DcMode::Sd),
            p(3, DcMode::Sd),
            p(5, DcMode::Sd)
        ),
    )
}

fn criterion_8(desk: &Desk) -> Outcome {
    let rows = cross_setting_eval(&desk.run.model, &desk.ds, &[4.0, 6.0, 8.0], Some((32, 32)), None).unwrap();
    let accel = &rows[..3];
    let lp = &rows[3];
    let monotone = accel.windows(2).all(|w| w[1].mean_psnr <= w[0].mean_psnr);
    let beats = accel.iter().all(|r| r.mean_psnr > r.baseline_psnr);
    let desc: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {:.2} (A^H b {:.2})", r.setting, r.mean_psnr, r.baseline_psnr))
        .collect();
    check(
        monotone && beats && lp.mean_psnr.is_finite() && lp.mean_psnr > lp.baseline_psnr,
        desc.join(", "),
    )
}

fn run(n: usize, name: &str, results: &mut Vec<(usize, bool)>, f: impl FnOnce() -> Outcome) {
    let t = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(format!(
            "panicked: {}",
            p.downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default()
        ))
    });
    let secs = t.elapsed().as_secs_f64();
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    line(&format!("criterion {n:>2} {tag} [{name}] {detail} ({secs:.1}s)"));
    results.push((n, outcome.is_ok()));
}

fn main() {
    // single-threaded, deterministic execution for every criterion
    let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    let mut results = Vec::new();
    run(1, "adjoint", &mut results, criterion_1);
    run(2, "dc equivalence", &mut results, criterion_2);
    run(3, "gradients", &mut results, criterion_3);
    run(4, "parameter count", &mut results, criterion_4);

    let cfg = desk_config();
    let desk = catch_unwind(|| {
        let ds = make_dataset::<f64>(&cfg.dataset_spec()).unwrap();
        let (run, train_seconds) = train_modl(&cfg, &ds);
        Desk {
            cfg,
            ds,
            run,
            train_seconds,
        }
    });
    match desk {
        Ok(desk) => {
            run(5, "desk-scale training", &mut results, || criterion_5(&desk));
            run(9, "dc monotonicity", &mut results, || criterion_9(&desk));
            run(10, "determinism", &mut results, || criterion_10(&desk));
            let mut trained = Vec::new();
            run(7, "variant ordering", &mut results, || {
                let (o, t) = criterion_7(&desk);
                trained = t;
                o
            });
            run(6, "iteration sweep", &mut results, || criterion_6(&desk, &trained));
            run(8, "cross-setting", &mut results, || criterion_8(&desk));
        }
        Err(_) => {
            for n in [5, 9, 10, 7, 6, 8] {
                line(&format!(
                    "criterion {n:>2} FAIL [desk-scale] training run did not complete"
                ));
                results.push((n, false));
            }
        }
    }

    results.sort();
    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    line(&format!(
        "acceptance: {}/{} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed {failed:?}")
        }
    ));
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
