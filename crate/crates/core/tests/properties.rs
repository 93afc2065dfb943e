mod common;

use modl::config::ExperimentConfig;
use modl::data::psnr;
use modl::dc::{dc_layer, dc_objective};
use modl::fft::CenteredFft2;
use modl::{make_synthetic_coils, make_vd_mask, mtf, CgConfig, ComplexTensor, Cplx, ForwardModel, RealTensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image(h: usize, w: usize, r: &mut impl Rng) -> ComplexTensor<f64> {
    ComplexTensor::from_fn(&[h, w], |_| {
        Cplx::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
    })
}

fn model(h: usize, w: usize, coils: usize, seed: u64) -> ForwardModel<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mask = common::random_mask(h, w, r.random_range(0.1..0.9), &mut r);
    if coils == 1 {
        ForwardModel::single_channel(mask)
    } else {
        ForwardModel::multi_channel(mask, make_synthetic_coils(h, w, coils, seed).unwrap()).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adjoint_identity(h in 2usize..13, w in 2usize..13, coils in 1usize..4, seed in any::<u64>()) {
        let m = model(h, w, coils, seed);
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x = image(h, w, &mut r);
        let y = ComplexTensor::from_fn(&m.data_dims(), |_| Cplx::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)));
        let lhs = m.forward(&x).unwrap().dot(&y);
        let rhs = x.dot(&m.adjoint(&y).unwrap());
        prop_assert!((lhs - rhs).norm() <= 1e-12 * x.norm() * y.norm());
    }

    #[test]
    fn centered_fft_is_unitary_and_invertible(h in 1usize..20, w in 1usize..20, seed in any::<u64>()) {
        let fft = CenteredFft2::<f64>::new(h, w);
        let x = image(h, w, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut k = x.data().to_vec();
        fft.forward(&mut k);
        let nk: f64 = k.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!((nk - x.norm()).abs() <= 1e-12 * x.norm());
        fft.inverse(&mut k);
        prop_assert!(k.iter().zip(x.data()).all(|(a, b)| (a - b).norm() <= 1e-12));
    }

    #[test]
    fn dc_never_increases_its_objective(coils in 1usize..3, lambda in 0.01f64..5.0, seed in any::<u64>()) {
        let m = model(8, 8, coils, seed);
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let z = image(8, 8, &mut r);
        let b = m.forward(&image(8, 8, &mut r)).unwrap();
        let x = dc_layer(&z, &m, &b, lambda, &CgConfig::default()).unwrap().x;
        let before = dc_objective(&z, &z, &m, &b, lambda).unwrap();
        let after = dc_objective(&x, &z, &m, &b, lambda).unwrap();
        prop_assert!(after <= before * (1.0 + 1e-10));
    }

    #[test]
    fn psnr_ignores_pixel_order_and_global_phase(n in 4usize..40, phase in 0.0f64..6.3, seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let t = image(1, n, &mut r);
        let x = ComplexTensor::from_fn(&[1, n], |i| t.data()[i] + Cplx::new(r.random_range(-0.1..0.1), 0.05));
        let p = psnr(&x, &t).unwrap();

        let perm: Vec<usize> = (0..n).rev().collect();
        let tp = ComplexTensor::from_fn(&[1, n], |i| t.data()[perm[i]]);
        let xp = ComplexTensor::from_fn(&[1, n], |i| x.data()[perm[i]]);
        prop_assert!((psnr(&xp, &tp).unwrap() - p).abs() <= 1e-9);

        let rot = Cplx::from_polar(1.0, phase);
        let tr = ComplexTensor::from_fn(&[1, n], |i| t.data()[i] * rot);
        let xr = ComplexTensor::from_fn(&[1, n], |i| x.data()[i] * rot);
        prop_assert!((psnr(&xr, &tr).unwrap() - p).abs() <= 1e-9);
    }

    #[test]
    fn psnr_matches_straight_line_formula(n in 1usize..64, seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let t = image(1, n, &mut r);
        let x = image(1, n, &mut r);
        let mut peak = 0.0f64;
        let mut se = 0.0;
        for i in 0..n {
            peak = peak.max(t.data()[i].norm());
            se += (x.data()[i] - t.data()[i]).norm_sqr();
        }
        let oracle = 20.0 * (peak / (se / n as f64).sqrt()).log10();
        prop_assert!((psnr(&x, &t).unwrap() - oracle).abs() <= 1e-10);
    }

    #[test]
    fn mtf_round_trip(dims in prop::collection::vec(1usize..5, 1..5), seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = dims.iter().product();
        let c = ComplexTensor::<f32>::from_fn(&dims, |_| Cplx::new(r.random(), r.random()));
        let back = mtf::decode(&mtf::encode(&c)).unwrap().into_complex::<f32>().unwrap();
        prop_assert_eq!(back, c);
        let re = RealTensor::<f64>::new(dims.clone(), (0..n).map(|_| r.random()).collect()).unwrap();
        let back = mtf::decode(&mtf::encode(&re)).unwrap().into_real::<f64>().unwrap();
        prop_assert_eq!(back, re);
    }

    #[test]
    fn vd_mask_hits_requested_acceleration(h in 16usize..48, w in 16usize..48, accel in 1.5f64..8.0, seed in any::<u64>()) {
        let m = make_vd_mask(h, w, accel, seed).unwrap();
        let want = ((h * w) as f64 / accel).round() as usize;
        prop_assert_eq!(m.count(), want);
        prop_assert_eq!(m, make_vd_mask(h, w, accel, seed).unwrap());
    }

    #[test]
    fn config_dump_round_trips(k in 1usize..12, lr in 1e-5f64..1e-1, seed in any::<u64>(), f64p in any::<bool>()) {
        let mut c = ExperimentConfig::default();
        c.k = k;
        c.lr = lr;
        c.seed = seed;
        c.set("precision", if f64p { "f64" } else { "f32" }).unwrap();
        prop_assert_eq!(ExperimentConfig::parse(&c.dump()).unwrap(), c);
    }
}
