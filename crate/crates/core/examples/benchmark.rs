//! Variant comparison, iteration sweep and cross-setting evaluation on a toy dataset.

use modl::config::ExperimentConfig;
use modl::data::{
    bench_variants, cross_csv, cross_setting_eval, make_dataset, sweep_csv, sweep_iterations, train_config, VARIANTS,
};
use modl::unrolled::DcMode;

pub fn run_example() -> modl::Result<()> {
    let cfg = ExperimentConfig {
        k: 3,
        layers: 2,
        filters: 4,
        epochs: 1,
        stage1_epochs: 1,
        h: 16,
        w: 16,
        n_train: 4,
        n_val: 2,
        n_test: 2,
        coils: 2,
        accel: 3.0,
        ..ExperimentConfig::default()
    };
    let ds = make_dataset::<f32>(&cfg.dataset_spec())?;

    let (report, _) = bench_variants(&cfg, &ds, &VARIANTS, vec![])?;
    print!("{}", report.csv());

    let sweep = sweep_iterations(&[1, 2], &[DcMode::Cg, DcMode::Sd], &cfg, &ds, |_, _| None)?;
    print!("{}", sweep_csv(&sweep));

    let model = train_config(&cfg, cfg.k, &ds)?.model;
    let cross = cross_setting_eval(&model, &ds, &[3.0, 5.0], Some((8, 8)), None)?;
    print!("{}", cross_csv(&cross));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
