//! Train a small unrolled network, checkpoint it and reconstruct with a trace.

use modl::data::{make_dataset, psnr, DatasetSpec};
use modl::nn::Arch;
use modl::unrolled::{
    baseline_psnr, evaluate_psnr, load_checkpoint, reconstruct, save_checkpoint, train, TrainOptions, UnrolledModel,
    VariantSpec,
};
use modl::CgConfig;

pub fn run_example() -> modl::Result<()> {
    let spec = DatasetSpec {
        h: 24,
        w: 24,
        n_train: 8,
        n_val: 2,
        n_test: 2,
        coils: 2,
        ..DatasetSpec::default()
    };
    let ds = make_dataset::<f32>(&spec)?;
    let model = UnrolledModel::new(3, VariantSpec::MODL, Arch::new(3, 8)?, 0, CgConfig::default())?;
    let opts = TrainOptions {
        epochs: 2,
        stage1_epochs: 1,
        batch: 4,
        ..TrainOptions::default()
    };
    let report = train(model, &ds.train, &ds.val, &opts)?;
    print!("{}", report.metrics_csv());

    let base = baseline_psnr(&ds.test)?;
    let ours = evaluate_psnr(&report.model, &ds.test)?;
    println!("test PSNR: zero-filled {:.2} dB, network {:.2} dB", base[0], ours[0]);

    let dir = std::env::temp_dir().join(format!("modl-ckpt-example-{}", std::process::id()));
    save_checkpoint(&dir, &report.model, Some(&report.adam))?;
    let (restored, _) = load_checkpoint::<f32>(&dir)?;
    let sample = &ds.test[0];
    let (x, trace) = reconstruct(&restored, &sample.problem, None, true)?;
    for (k, t) in trace.unwrap_or_default().iter().enumerate() {
        println!("iteration {}: PSNR of x_k {:.2} dB", k + 1, psnr(&t.x, &sample.target)?);
    }
    println!("final {:.2} dB", psnr(&x, &sample.target)?);
    std::fs::remove_dir_all(&dir).map_err(|e| modl::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
