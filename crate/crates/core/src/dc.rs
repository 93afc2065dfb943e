//! Data-consistency layers and their gradients.
//!
//! The CG layer computes `x = Q^{-1}(A^H b + lambda z)` with
//! `Q = A^H A + lambda I`. Its reverse pass needs one more solve with `Q`:
//! `dL/dz = lambda Q^{-1} g` and `dL/dlambda = Re <Q^{-1} g, z - x>`, where
//! `g = dL/dx` packs `dL/dRe + i dL/dIm`.

use crate::cg::{cg_solve, CgConfig, DcOutput};
use crate::linalg::{norm_sqr, re_dot};
use crate::operators::{ForwardModel, ModelKind};
use crate::scalar::{Cplx, Real};
use crate::tensor::ComplexTensor;
use crate::{Error, Result};

/// Which route inverts `Q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DcSolver {
    /// Closed form in k-space for single-channel models, CG otherwise.
    #[default]
    Auto,
    /// Always CG.
    Cg,
}

fn check_lambda<T: Real>(lambda: T) -> Result<()> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

fn apply_q<'a, T: Real>(model: &'a ForwardModel<T>, lambda: T) -> impl FnMut(&[Cplx<T>], &mut [Cplx<T>]) + 'a {
    move |v, out| {
        model.normal_into(v, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o = *o + vi * lambda;
        }
    }
}

/// `Q^{-1} v` in closed form for a single-channel model.
fn q_inverse_analytic<T: Real>(model: &ForwardModel<T>, v: &ComplexTensor<T>, lambda: T) -> ComplexTensor<T> {
    let mut k = v.clone();
    model.fft().forward(k.data_mut());
    let on = T::one() / (T::one() + lambda);
    let off = T::one() / lambda;
    for (kv, &m) in k.data_mut().iter_mut().zip(model.mask().as_slice()) {
        *kv = *kv * if m { on } else { off };
    }
    model.fft().inverse(k.data_mut());
    k
}

/// Solves `(A^H A + lambda I) x = rhs`.
pub fn solve_q<T: Real>(
    model: &ForwardModel<T>,
    lambda: T,
    rhs: &ComplexTensor<T>,
    x0: &ComplexTensor<T>,
    cfg: &CgConfig,
    solver: DcSolver,
) -> Result<DcOutput<T>> {
    check_lambda(lambda)?;
    if solver == DcSolver::Auto && model.kind() == ModelKind::SingleChannel {
        if rhs.dims() != model.image_dims() {
            return Err(Error::Dimension(format!(
                "rhs dims {:?}, model expects {:?}",
                rhs.dims(),
                model.image_dims()
            )));
        }
        return Ok(DcOutput {
            x: q_inverse_analytic(model, rhs, lambda),
            iters_used: 0,
            final_relres: 0.0,
            converged: true,
        });
    }
    cg_solve(apply_q(model, lambda), rhs, x0, cfg)
}

fn dc_rhs<T: Real>(
    z: &ComplexTensor<T>,
    model: &ForwardModel<T>,
    b: &ComplexTensor<T>,
    lambda: T,
) -> Result<ComplexTensor<T>> {
    let mut rhs = model.adjoint(b)?;
    rhs.same_dims(z, "dc_layer z vs image")?;
    for (r, zi) in rhs.data_mut().iter_mut().zip(z.data()) {
        *r = *r + zi * lambda;
    }
    Ok(rhs)
}

/// `x = (A^H A + lambda I)^{-1} (A^H b + lambda z)`: the closed form for
/// single-channel models, CG warm-started at `z` otherwise.
pub fn dc_layer<T: Real>(
    z: &ComplexTensor<T>,
    model: &ForwardModel<T>,
    b: &ComplexTensor<T>,
    lambda: T,
    cfg: &CgConfig,
) -> Result<DcOutput<T>> {
    dc_layer_with(z, model, b, lambda, cfg, DcSolver::Auto)
}

pub fn dc_layer_with<T: Real>(
    z: &ComplexTensor<T>,
    model: &ForwardModel<T>,
    b: &ComplexTensor<T>,
    lambda: T,
    cfg: &CgConfig,
    solver: DcSolver,
) -> Result<DcOutput<T>> {
    check_lambda(lambda)?;
    if solver == DcSolver::Auto && model.kind() == ModelKind::SingleChannel {
        let x = dc_analytic(z, model, b, lambda)?;
        return Ok(DcOutput {
            x,
            iters_used: 0,
            final_relres: 0.0,
            converged: true,
        });
    }
    let rhs = dc_rhs(z, model, b, lambda)?;
    solve_q(model, lambda, &rhs, z, cfg, DcSolver::Cg)
}

/// Closed-form single-channel data consistency in k-space:
/// acquired samples become `(b + lambda z_hat) / (1 + lambda)`, the rest keep `z_hat`.
pub fn dc_analytic<T: Real>(
    z: &ComplexTensor<T>,
    model: &ForwardModel<T>,
    b: &ComplexTensor<T>,
    lambda: T,
) -> Result<ComplexTensor<T>> {
    check_lambda(lambda)?;
    if model.kind() != ModelKind::SingleChannel {
        return Err(Error::Parameter(
            "closed-form data consistency needs a single-channel model".into(),
        ));
    }
    if z.dims() != model.image_dims() || b.dims() != model.data_dims().as_slice() {
        return Err(Error::Dimension(format!(
            "dc_analytic: z {:?}, b {:?}, model {:?}",
            z.dims(),
            b.dims(),
            model.image_dims()
        )));
    }
    let mut k = z.clone();
    model.fft().forward(k.data_mut());
    let denom = T::one() + lambda;
    for ((kv, bv), &m) in k.data_mut().iter_mut().zip(b.data()).zip(model.mask().as_slice()) {
        if m {
            *kv = (bv + *kv * lambda) / denom;
        }
    }
    model.fft().inverse(k.data_mut());
    Ok(k)
}

/// `lambda Q^{-1} g`: gradient w.r.t. the layer input `z`.
pub fn dc_backward_z<T: Real>(
    grad_x: &ComplexTensor<T>,
    model: &ForwardModel<T>,
    lambda: T,
    cfg: &CgConfig,
) -> Result<ComplexTensor<T>> {
    let u = solve_q(
        model,
        lambda,
        grad_x,
        &ComplexTensor::zeros(grad_x.dims()),
        cfg,
        DcSolver::Auto,
    )?;
    let mut gz = u.x;
    for v in gz.data_mut() {
        *v = *v * lambda;
    }
    Ok(gz)
}

/// `Re <g, Q^{-1}(z - x_out)>`: gradient w.r.t. `lambda`.
pub fn dc_backward_lambda<T: Real>(
    grad_x: &ComplexTensor<T>,
    x_out: &ComplexTensor<T>,
    z: &ComplexTensor<T>,
    model: &ForwardModel<T>,
    cfg: &CgConfig,
    lambda: T,
) -> Result<T> {
    z.same_dims(x_out, "dc_backward_lambda z vs x")?;
    let diff = ComplexTensor::from_fn(z.dims(), |i| z.data()[i] - x_out.data()[i]);
    let w = solve_q(
        model,
        lambda,
        &diff,
        &ComplexTensor::zeros(z.dims()),
        cfg,
        DcSolver::Auto,
    )?;
    grad_x.same_dims(&w.x, "dc_backward_lambda grad")?;
    Ok(re_dot(grad_x.data(), w.x.data()))
}

/// Both layer gradients from a single solve: `u = Q^{-1} g`, then
/// `dL/dz = lambda u` and `dL/dlambda = Re <u, z - x_out>` (Q is Hermitian).
pub fn dc_backward<T: Real>(
    grad_x: &ComplexTensor<T>,
    x_out: &ComplexTensor<T>,
    z: &ComplexTensor<T>,
    model: &ForwardModel<T>,
    lambda: T,
    cfg: &CgConfig,
) -> Result<(ComplexTensor<T>, T)> {
    z.same_dims(x_out, "dc_backward z vs x")?;
    let u = solve_q(
        model,
        lambda,
        grad_x,
        &ComplexTensor::zeros(grad_x.dims()),
        cfg,
        DcSolver::Auto,
    )?
    .x;
    let mut grad_lambda = T::zero();
    for ((ui, zi), xi) in u.data().iter().zip(z.data()).zip(x_out.data()) {
        let d = zi - xi;
        grad_lambda = grad_lambda + ui.re * d.re + ui.im * d.im;
    }
    let mut gz = u;
    for v in gz.data_mut() {
        *v = *v * lambda;
    }
    Ok((gz, grad_lambda))
}

/// `||A x - b||^2 + lambda ||x - z||^2`
pub fn dc_objective<T: Real>(
    x: &ComplexTensor<T>,
    z: &ComplexTensor<T>,
    model: &ForwardModel<T>,
    b: &ComplexTensor<T>,
    lambda: T,
) -> Result<f64> {
    let ax = model.forward(x)?;
    ax.same_dims(b, "dc_objective")?;
    x.same_dims(z, "dc_objective")?;
    let data: f64 = ax
        .data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| (p - q).norm_sqr().f64())
        .sum();
    let prox: f64 = x
        .data()
        .iter()
        .zip(z.data())
        .map(|(p, q)| (p - q).norm_sqr().f64())
        .sum();
    Ok(data + lambda.f64() * prox)
}

/// `A^H (A z - b)`
fn data_gradient<T: Real>(
    z: &ComplexTensor<T>,
    model: &ForwardModel<T>,
    b: &ComplexTensor<T>,
) -> Result<ComplexTensor<T>> {
    let mut g = model.normal(z)?;
    let ahb = model.adjoint(b)?;
    for (gi, ai) in g.data_mut().iter_mut().zip(ahb.data()) {
        *gi = *gi - ai;
    }
    Ok(g)
}

/// One steepest-descent step on `||A x - b||^2 / 2`: `x = z - alpha A^H (A z - b)`.
pub fn sd_step<T: Real>(
    z: &ComplexTensor<T>,
    model: &ForwardModel<T>,
    b: &ComplexTensor<T>,
    alpha: T,
) -> Result<ComplexTensor<T>> {
    if !(alpha > T::zero()) {
        return Err(Error::Parameter(format!("step size must be positive, got {alpha}")));
    }
    let g = data_gradient(z, model, b)?;
    Ok(ComplexTensor::from_fn(z.dims(), |i| z.data()[i] - g.data()[i] * alpha))
}

/// Reverse pass of [`sd_step`]: `(g - alpha A^H A g, Re <g, -A^H (A z - b)>)`.
pub fn sd_backward<T: Real>(
    grad_x: &ComplexTensor<T>,
    z: &ComplexTensor<T>,
    model: &ForwardModel<T>,
    b: &ComplexTensor<T>,
    alpha: T,
) -> Result<(ComplexTensor<T>, T)> {
    let n = model.normal(grad_x)?;
    let gz = ComplexTensor::from_fn(grad_x.dims(), |i| grad_x.data()[i] - n.data()[i] * alpha);
    let d = data_gradient(z, model, b)?;
    Ok((gz, -re_dot(grad_x.data(), d.data())))
}

/// `||A x - b||^2`
pub fn data_cost<T: Real>(x: &ComplexTensor<T>, model: &ForwardModel<T>, b: &ComplexTensor<T>) -> Result<f64> {
    let ax = model.forward(x)?;
    ax.same_dims(b, "data_cost")?;
    let r: Vec<Cplx<T>> = ax.data().iter().zip(b.data()).map(|(p, q)| p - q).collect();
    Ok(norm_sqr(&r).f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coils::make_synthetic_coils;
    use crate::mask::{make_vd_mask, SamplingMask};
    use crate::rng;
    use num_traits::Zero;
    use rand::Rng;

    fn rand_tensor(dims: &[usize], rng: &mut impl Rng) -> ComplexTensor<f64> {
        ComplexTensor::from_fn(dims, |_| {
            Cplx::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    fn close(a: &ComplexTensor<f64>, b: &ComplexTensor<f64>, tol: f64) {
        let err = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max);
        assert!(err <= tol, "max abs diff {err:e} > {tol:e}");
    }

    fn kspace(model: &ForwardModel<f64>, x: &ComplexTensor<f64>) -> ComplexTensor<f64> {
        let mut k = x.clone();
        model.fft().forward(k.data_mut());
        k
    }

    #[test]
    fn analytic_plug_in() {
        // lambda = 1, b = 2, z_hat = 0 on an acquired sample -> 1
        let model = ForwardModel::<f64>::single_channel(SamplingMask::full(4, 4));
        let mut b = ComplexTensor::zeros(&[4, 4]);
        b.data_mut()[5] = Cplx::new(2.0, 0.0);
        let x = dc_analytic(&ComplexTensor::zeros(&[4, 4]), &model, &b, 1.0).unwrap();
        let k = kspace(&model, &x);
        assert!((k.data()[5] - Cplx::new(1.0, 0.0)).norm() < 1e-14);
        assert!(k.data().iter().enumerate().all(|(i, v)| i == 5 || v.norm() < 1e-14));
    }

    #[test]
    fn large_lambda_returns_z() {
        let mut r = rng::rng(3);
        let model = ForwardModel::single_channel(make_vd_mask(16, 16, 3.0, 1).unwrap());
        let z = rand_tensor(&[16, 16], &mut r);
        let b = model
            .simulate_measurement(&rand_tensor(&[16, 16], &mut r), 0.0, 0)
            .unwrap();
        let x = dc_analytic(&z, &model, &b, 1e6).unwrap();
        close(&x, &z, 1e-5);
    }

    #[test]
    fn full_mask_closed_form() {
        let mut r = rng::rng(4);
        let model = ForwardModel::single_channel(SamplingMask::full(8, 8));
        let z = rand_tensor(&[8, 8], &mut r);
        let b = rand_tensor(&[8, 8], &mut r);
        let lambda = 0.3;
        let x = dc_layer(&z, &model, &b, lambda, &CgConfig::default()).unwrap().x;
        let ahb = model.adjoint(&b).unwrap();
        let want = ComplexTensor::from_fn(&[8, 8], |i| (ahb.data()[i] + z.data()[i] * lambda) / (1.0 + lambda));
        close(&x, &want, 1e-12);

        // small lambda, z = 0 -> A^H b
        let x = dc_layer(&ComplexTensor::zeros(&[8, 8]), &model, &b, 1e-9, &CgConfig::default())
            .unwrap()
            .x;
        close(&x, &ahb, 1e-8);

        // grad_z = lambda / (1 + lambda) g
        let g = rand_tensor(&[8, 8], &mut r);
        let gz = dc_backward_z(&g, &model, lambda, &CgConfig::default()).unwrap();
        let want = ComplexTensor::from_fn(&[8, 8], |i| g.data()[i] * (lambda / (1.0 + lambda)));
        close(&gz, &want, 1e-12);
    }

    #[test]
    fn analytic_matches_cg_path() {
        let mut r = rng::rng(8);
        let cfg = CgConfig::new(1e-12, 500).unwrap();
        for seed in 0..5 {
            let model = ForwardModel::single_channel(make_vd_mask(16, 20, 4.0, seed).unwrap());
            let z = rand_tensor(&[16, 20], &mut r);
            let b = model
                .simulate_measurement(&rand_tensor(&[16, 20], &mut r), 0.01, seed)
                .unwrap();
            let lambda = 0.05 + r.random::<f64>();
            let a = dc_layer(&z, &model, &b, lambda, &cfg).unwrap().x;
            let c = dc_layer_with(&z, &model, &b, lambda, &cfg, DcSolver::Cg).unwrap();
            assert!(c.converged);
            close(&a, &c.x, 1e-6);
        }
    }

    #[test]
    fn zero_gradients_and_fixed_points() {
        let mut r = rng::rng(12);
        let coils = make_synthetic_coils(16, 16, 2, 3).unwrap();
        let model = ForwardModel::multi_channel(make_vd_mask(16, 16, 3.0, 2).unwrap(), coils).unwrap();
        let cfg = CgConfig::gradient_check();
        let g0 = ComplexTensor::zeros(&[16, 16]);
        let gz = dc_backward_z(&g0, &model, 0.2, &cfg).unwrap();
        assert!(gz.data().iter().all(|v| v.is_zero()));

        let z = rand_tensor(&[16, 16], &mut r);
        let g = rand_tensor(&[16, 16], &mut r);
        assert_eq!(dc_backward_lambda(&g, &z, &z, &model, &cfg, 0.2).unwrap(), 0.0);

        // sd: consistent point is fixed; z = 0 gives alpha A^H b
        let x = rand_tensor(&[16, 16], &mut r);
        let b = model.forward(&x).unwrap();
        close(&sd_step(&x, &model, &b, 1.0).unwrap(), &x, 1e-12);
        let from0 = sd_step(&ComplexTensor::zeros(&[16, 16]), &model, &b, 0.7).unwrap();
        let want = ComplexTensor::from_fn(&[16, 16], |i| model.adjoint(&b).unwrap().data()[i] * 0.7);
        close(&from0, &want, 1e-12);
    }

    #[test]
    fn fused_backward_matches_separate() {
        let mut r = rng::rng(21);
        let coils = make_synthetic_coils(16, 16, 3, 3).unwrap();
        let model = ForwardModel::multi_channel(make_vd_mask(16, 16, 4.0, 5).unwrap(), coils).unwrap();
        let cfg = CgConfig::new(1e-12, 300).unwrap();
        let z = rand_tensor(&[16, 16], &mut r);
        let b = model
            .simulate_measurement(&rand_tensor(&[16, 16], &mut r), 0.01, 1)
            .unwrap();
        let x = dc_layer(&z, &model, &b, 0.1, &cfg).unwrap().x;
        let g = rand_tensor(&[16, 16], &mut r);
        let (gz, gl) = dc_backward(&g, &x, &z, &model, 0.1, &cfg).unwrap();
        close(&gz, &dc_backward_z(&g, &model, 0.1, &cfg).unwrap(), 1e-9);
        let gl2 = dc_backward_lambda(&g, &x, &z, &model, &cfg, 0.1).unwrap();
        assert!((gl - gl2).abs() <= 1e-8 * gl.abs().max(1.0));
    }

    #[test]
    fn sd_descends_data_cost() {
        let mut r = rng::rng(31);
        let coils = make_synthetic_coils(16, 16, 4, 2).unwrap();
        let model = ForwardModel::multi_channel(make_vd_mask(16, 16, 4.0, 9).unwrap(), coils).unwrap();
        for _ in 0..10 {
            let z = rand_tensor(&[16, 16], &mut r);
            let b = model
                .simulate_measurement(&rand_tensor(&[16, 16], &mut r), 0.0, 0)
                .unwrap();
            let x = sd_step(&z, &model, &b, 1.0).unwrap();
            assert!(data_cost(&x, &model, &b).unwrap() < data_cost(&z, &model, &b).unwrap());
        }
    }

    #[test]
    fn rejects_bad_lambda_and_dims() {
        let model = ForwardModel::<f64>::single_channel(SamplingMask::full(8, 8));
        let z = ComplexTensor::zeros(&[8, 8]);
        assert!(dc_layer(&z, &model, &z, 0.0, &CgConfig::default()).is_err());
        assert!(dc_layer(&ComplexTensor::zeros(&[4, 4]), &model, &z, 1.0, &CgConfig::default()).is_err());
        assert!(sd_step(&z, &model, &z, -1.0).is_err());
    }
}
