//! The data-consistency update, solved in closed form and by conjugate gradients.

use modl::dc::{dc_analytic, dc_layer, dc_layer_with, dc_objective, DcSolver};
use modl::{make_synthetic_coils, make_vd_mask, CgConfig, ComplexTensor, Cplx, ForwardModel};

pub fn run_example() -> modl::Result<()> {
    let (h, w) = (32, 32);
    let target = ComplexTensor::<f64>::from_fn(&[h, w], |i| Cplx::new(((i % w) as f64 / 5.0).sin(), 0.1));
    let z = ComplexTensor::zeros(&[h, w]);
    let lambda = 0.05;

    let single = ForwardModel::single_channel(make_vd_mask(h, w, 4.0, 3)?);
    let b = single.simulate_measurement(&target, 0.0, 0)?;
    let closed = dc_analytic(&z, &single, &b, lambda)?;
    let cg = dc_layer_with(&z, &single, &b, lambda, &CgConfig::new(1e-12, 200)?, DcSolver::Cg)?;
    let gap = closed
        .data()
        .iter()
        .zip(cg.x.data())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    println!(
        "closed form vs CG ({} iterations): max difference {gap:.2e}",
        cg.iters_used
    );

    let multi = ForwardModel::multi_channel(make_vd_mask(h, w, 4.0, 3)?, make_synthetic_coils(h, w, 4, 3)?)?;
    let b = multi.simulate_measurement(&target, 0.01, 1)?;
    let out = dc_layer(&z, &multi, &b, lambda, &CgConfig::default())?;
    println!(
        "4-coil DC: {} CG iterations, objective {:.4} -> {:.4}",
        out.iters_used,
        dc_objective(&z, &z, &multi, &b, lambda)?,
        dc_objective(&out.x, &z, &multi, &b, lambda)?
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
