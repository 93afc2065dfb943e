//! Sampling masks, coil maps and the multichannel Fourier operator.

use modl::rng::{self, Stream};
use modl::{make_lowpass_mask, make_synthetic_coils, make_vd_mask, ComplexTensor, Cplx, ForwardModel};
use rand::Rng;

pub fn run_example() -> modl::Result<()> {
    let (h, w) = (32, 32);
    let mask = make_vd_mask(h, w, 4.0, 7)?;
    println!("variable-density mask: {} of {} samples", mask.count(), h * w);
    let lowpass = make_lowpass_mask(h, w, 16, 16)?;
    println!("low-pass mask: acceleration {}", lowpass.acceleration());

    let coils = make_synthetic_coils::<f64>(h, w, 4, 7)?;
    let a = ForwardModel::multi_channel(mask, coils)?;

    let mut r = rng::substream(7, Stream::Noise, 0);
    let x = ComplexTensor::from_fn(&[h, w], |_| {
        Cplx::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
    });
    let y = ComplexTensor::from_fn(&a.data_dims(), |_| Cplx::new(r.random_range(-1.0..1.0), 0.0));
    let lhs = a.forward(&x)?.dot(&y);
    let rhs = x.dot(&a.adjoint(&y)?);
    println!("<Ax, y> - <x, A^H y> = {:.2e}", (lhs - rhs).norm());

    let b = a.simulate_measurement(&x, 0.01, 1)?;
    let zero_filled = a.adjoint(&b)?;
    println!(
        "measurements {:?}, zero-filled image {:?}",
        b.dims(),
        zero_filled.dims()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
