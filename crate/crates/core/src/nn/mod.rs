//! Hand-written CNN building blocks for the denoiser.

pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod denoiser;
pub mod relu;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use batchnorm::Mode;
pub use denoiser::{
    count_params, count_params_arch, denoiser_backward, denoiser_forward, sigmoid, softplus, softplus_inv, Arch,
    ConvLayerParams, DenoiserCache, DenoiserGrads, DenoiserParams, LAMBDA_INIT,
};
