//! The unrolled network, its variants and training.

pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod pretrain;
pub mod train;
pub mod variant;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::{loss_mse, loss_mse_grad};
pub use model::{
    model_backward, model_forward, reconstruct, DcCheck, ForwardOptions, ForwardPass, IterationTrace, ModelGrads,
    Problem, UnrolledCache, UnrolledModel,
};
pub use pretrain::{deployment_schedule, pretrain_denoisers, schedule_for, PretrainReport, NOISE_LEVELS};
pub use train::{
    baseline_psnr, evaluate_psnr, metrics_csv, train, DcMonitor, EpochMetrics, Sample, TrainOptions, TrainReport,
};
pub use variant::{DcMode, Sharing, TrainingMode, VariantSpec};
