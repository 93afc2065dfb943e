//! Synthetic data, metrics and the benchmark harness.

pub mod bench;
pub mod dataset;
pub mod image;
pub mod metrics;
pub mod phantom;

pub use bench::{
    bench_variants, cross_csv, cross_setting_eval, sweep_csv, sweep_iterations, train_config, BenchReport, BenchRow,
    CrossRow, SweepRow, TrainedVariant, BASELINE, VARIANTS,
};
pub use dataset::{
    load_dataset, make_dataset, read_manifest, write_dataset, Dataset, DatasetManifest, DatasetSpec, ManifestEntry,
    Record, Split,
};
pub use image::{save_error_png, save_magnitude_png, save_mask_png};
pub use metrics::{psnr, summarize, PSNR_CAP};
pub use phantom::{make_phantom, PhantomSpec};
