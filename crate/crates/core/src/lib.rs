//! Model-based deep learning (MoDL) reconstruction for undersampled
//! Fourier inverse problems.
//!
//! The reconstruction alternates a residual CNN denoiser `D_w` with a
//! data-consistency layer that solves `(A^H A + lambda I) x = A^H b + lambda z`
//! exactly (closed form or conjugate gradients). The unrolled network shares
//! weights across iterations and is trained end to end with hand-written
//! reverse passes, including gradients through the CG solve.
//!
//! Module map:
//!
//! - [`tensor`], [`mtf`]: containers and the on-disk tensor format
//! - [`mask`], [`coils`], [`operators`]: sampling masks and the forward model
//! - [`cg`], [`dc`]: conjugate gradients and data-consistency layers
//! - [`nn`]: convolution, batch norm, ReLU, the residual denoiser, Adam
//! - [`unrolled`]: the unrolled network, its variants and training
//! - [`data`]: phantoms, datasets, PSNR and the benchmark harness
//! - [`gradcheck`]: finite-difference verification suites
//! - [`config`], [`commands`]: experiment configs and CLI command bodies

pub mod cg;
pub mod coils;
pub mod commands;
pub mod config;
pub mod data;
pub mod dc;
pub mod error;
pub mod fft;
pub mod gradcheck;
pub mod linalg;
pub mod mask;
pub mod mtf;
pub mod nn;
pub mod operators;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod unrolled;

pub use cg::{cg_solve, CgConfig, DcOutput};
pub use coils::{make_synthetic_coils, CoilMaps};
pub use error::{Error, Result};
pub use mask::{make_lowpass_mask, make_vd_line_mask, make_vd_mask, SamplingMask};
pub use operators::{ForwardModel, ModelKind};
pub use scalar::{Cplx, Precision, Real};
pub use tensor::{channels_to_complex, complex_to_channels, ComplexTensor, RealTensor};
