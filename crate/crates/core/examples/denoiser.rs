//! The residual CNN denoiser: parameter accounting and one optimizer step.

use modl::nn::{
    adam_step, count_params_arch, denoiser_backward, denoiser_forward, AdamConfig, AdamState, Arch, DenoiserParams,
    Mode,
};
use modl::unrolled::{loss_mse, loss_mse_grad};
use modl::{ComplexTensor, Cplx};

pub fn run_example() -> modl::Result<()> {
    println!("5 layers x 64 filters: {} parameters", count_params_arch(Arch::PAPER));

    let arch = Arch::new(3, 8)?;
    let mut p = DenoiserParams::<f64>::init(arch, 1);
    let clean: Vec<ComplexTensor<f64>> = (0..2)
        .map(|s| ComplexTensor::from_fn(&[16, 16], |i| Cplx::new(((i + s) as f64 * 0.3).sin(), 0.0)))
        .collect();
    let noisy: Vec<ComplexTensor<f64>> = clean
        .iter()
        .map(|c| ComplexTensor::from_fn(c.dims(), |i| c.data()[i] + Cplx::new(0.1 * ((i * 7) as f64).cos(), 0.0)))
        .collect();

    let mut adam = AdamState::new(AdamConfig::default())?;
    for step in 0..5 {
        let (out, cache) = denoiser_forward(&noisy, &p, Mode::Train)?;
        let cache = cache.expect("train mode keeps a cache");
        let loss = loss_mse(&out, &clean)?;
        let (_, grads) = denoiser_backward(&loss_mse_grad(&out, &clean)?, &cache, &p)?;
        p.absorb_batch_stats(&cache);
        adam_step(&mut p.trainable_mut(), &grads.as_slices(), &mut adam)?;
        println!("step {step}: loss {loss:.5}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
