//! Measurement operators `A`, `A^H` and `A^H A` for single- and multi-channel
//! Cartesian Fourier acquisition.

use num_traits::Zero;
use rand_distr::{Distribution, Normal};

use crate::coils::CoilMaps;
use crate::fft::CenteredFft2;
use crate::mask::SamplingMask;
use crate::scalar::{Cplx, Real};
use crate::tensor::ComplexTensor;
use crate::{rng, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    SingleChannel,
    MultiChannel,
}

/// `A = S F` (single channel) or `A_i = S F diag(s_i)` stacked over coils.
///
/// Single-channel measurements live on the full `H x W` grid with
/// unacquired entries zero; multi-channel measurements are `H x W x C`.
#[derive(Clone, Debug)]
pub struct ForwardModel<T: Real> {
    mask: SamplingMask,
    coils: Option<CoilMaps<T>>,
    noise_sigma: f64,
    fft: CenteredFft2<T>,
}

impl<T: Real> ForwardModel<T> {
    pub fn single_channel(mask: SamplingMask) -> Self {
        let (h, w) = mask.shape();
        Self {
            mask,
            coils: None,
            noise_sigma: 0.0,
            fft: CenteredFft2::new(h, w),
        }
    }

    pub fn multi_channel(mask: SamplingMask, coils: CoilMaps<T>) -> Result<Self> {
        if mask.shape() != coils.shape() {
            return Err(Error::Dimension(format!(
                "mask {:?} vs coil maps {:?}",
                mask.shape(),
                coils.shape()
            )));
        }
        let (h, w) = mask.shape();
        Ok(Self {
            mask,
            coils: Some(coils),
            noise_sigma: 0.0,
            fft: CenteredFft2::new(h, w),
        })
    }

    pub fn with_noise_sigma(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn kind(&self) -> ModelKind {
        if self.coils.is_some() {
            ModelKind::MultiChannel
        } else {
            ModelKind::SingleChannel
        }
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn coils(&self) -> Option<&CoilMaps<T>> {
        self.coils.as_ref()
    }

    pub fn fft(&self) -> &CenteredFft2<T> {
        &self.fft
    }

    pub fn image_dims(&self) -> [usize; 2] {
        let (h, w) = self.mask.shape();
        [h, w]
    }

    pub fn data_dims(&self) -> Vec<usize> {
        let (h, w) = self.mask.shape();
        match &self.coils {
            None => vec![h, w],
            Some(c) => vec![h, w, c.ncoils()],
        }
    }

    fn ncoils(&self) -> usize {
        self.coils.as_ref().map_or(1, |c| c.ncoils())
    }

    fn check_image(&self, x: &ComplexTensor<T>) -> Result<()> {
        if x.dims() != self.image_dims() {
            return Err(Error::Dimension(format!(
                "image dims {:?}, model expects {:?}",
                x.dims(),
                self.image_dims()
            )));
        }
        Ok(())
    }

    fn check_data(&self, y: &ComplexTensor<T>) -> Result<()> {
        if y.dims() != self.data_dims() {
            return Err(Error::Dimension(format!(
                "measurement dims {:?}, model expects {:?}",
                y.dims(),
                self.data_dims()
            )));
        }
        Ok(())
    }

    fn apply_mask(&self, k: &mut [Cplx<T>]) {
        for (v, &m) in k.iter_mut().zip(self.mask.as_slice()) {
            if !m {
                *v = Cplx::zero();
            }
        }
    }

    /// Masked k-space of coil `i` (or of the image itself for one channel).
    fn coil_kspace(&self, x: &[Cplx<T>], coil: usize, buf: &mut [Cplx<T>]) {
        match &self.coils {
            None => buf.copy_from_slice(x),
            Some(c) => {
                for ((b, xv), s) in buf.iter_mut().zip(x).zip(c.map(coil)) {
                    *b = s * xv;
                }
            }
        }
        self.fft.forward(buf);
        self.apply_mask(buf);
    }

    /// Adds `conj(s_i) * IDFT(mask * k)` into `acc`, consuming `k`.
    fn coil_adjoint_acc(&self, k: &mut [Cplx<T>], coil: usize, acc: &mut [Cplx<T>]) {
        self.apply_mask(k);
        self.fft.inverse(k);
        match &self.coils {
            None => {
                for (a, v) in acc.iter_mut().zip(k.iter()) {
                    *a = *a + v;
                }
            }
            Some(c) => {
                for ((a, v), s) in acc.iter_mut().zip(k.iter()).zip(c.map(coil)) {
                    *a = *a + s.conj() * v;
                }
            }
        }
    }

    /// `A x`
    pub fn forward(&self, x: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        self.check_image(x)?;
        let n = x.len();
        let nc = self.ncoils();
        let mut out = vec![Cplx::zero(); n * nc];
        let mut buf = vec![Cplx::zero(); n];
        for coil in 0..nc {
            self.coil_kspace(x.data(), coil, &mut buf);
            if self.coils.is_none() {
                out.copy_from_slice(&buf);
            } else {
                for (p, v) in buf.iter().enumerate() {
                    out[p * nc + coil] = *v;
                }
            }
        }
        ComplexTensor::new(self.data_dims(), out)
    }

    /// `A^H y`
    pub fn adjoint(&self, y: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        self.check_data(y)?;
        let nc = self.ncoils();
        let n = y.len() / nc;
        let mut acc = vec![Cplx::zero(); n];
        let mut buf = vec![Cplx::zero(); n];
        for coil in 0..nc {
            if self.coils.is_none() {
                buf.copy_from_slice(y.data());
            } else {
                for (p, b) in buf.iter_mut().enumerate() {
                    *b = y.data()[p * nc + coil];
                }
            }
            self.coil_adjoint_acc(&mut buf, coil, &mut acc);
        }
        ComplexTensor::new(self.image_dims().to_vec(), acc)
    }

    /// `A^H A x`, performing exactly the arithmetic of `adjoint(forward(x))`.
    pub fn normal(&self, x: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        self.check_image(x)?;
        let mut out = vec![Cplx::zero(); x.len()];
        self.normal_into(x.data(), &mut out);
        ComplexTensor::new(self.image_dims().to_vec(), out)
    }

    /// Slice form of [`normal`](Self::normal) for solver inner loops.
    pub fn normal_into(&self, x: &[Cplx<T>], out: &mut [Cplx<T>]) {
        out.fill(Cplx::zero());
        let mut buf = vec![Cplx::zero(); x.len()];
        for coil in 0..self.ncoils() {
            self.coil_kspace(x, coil, &mut buf);
            self.coil_adjoint_acc(&mut buf, coil, out);
        }
    }

    /// `b = A x_true + n`, with complex white Gaussian noise of per-component
    /// std `noise_sigma` on acquired samples only.
    pub fn simulate_measurement(
        &self,
        x_true: &ComplexTensor<T>,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<ComplexTensor<T>> {
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::Parameter(format!(
                "noise sigma must be finite and >= 0, got {noise_sigma}"
            )));
        }
        let mut b = self.forward(x_true)?;
        if noise_sigma == 0.0 {
            return Ok(b);
        }
        let nc = self.ncoils();
        let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
        let mut rng = rng::substream(seed, rng::Stream::Noise, 0);
        let mask = self.mask.as_slice();
        for (i, v) in b.data_mut().iter_mut().enumerate() {
            if mask[i / nc] {
                let re = normal.sample(&mut rng);
                let im = normal.sample(&mut rng);
                *v = *v + Cplx::new(T::of(re), T::of(im));
            }
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coils::make_synthetic_coils;
    use crate::mask::{make_lowpass_mask, make_vd_mask};
    use rand::Rng;

    fn rand_tensor(dims: &[usize], rng: &mut impl Rng) -> ComplexTensor<f64> {
        ComplexTensor::from_fn(dims, |_| {
            Cplx::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    fn models() -> Vec<ForwardModel<f64>> {
        let vd = make_vd_mask(32, 24, 4.0, 3).unwrap();
        let lp = make_lowpass_mask(32, 24, 12, 10).unwrap();
        let coils = make_synthetic_coils(32, 24, 4, 1).unwrap();
        vec![
            ForwardModel::single_channel(vd.clone()),
            ForwardModel::single_channel(lp.clone()),
            ForwardModel::multi_channel(vd, coils.clone()).unwrap(),
            ForwardModel::multi_channel(lp, coils).unwrap(),
        ]
    }

    #[test]
    fn full_mask_is_unitary() {
        let a = ForwardModel::<f64>::single_channel(SamplingMask::full(8, 8));
        let mut x = ComplexTensor::zeros(&[8, 8]);
        x.data_mut()[4 * 8 + 4] = Cplx::new(1.0, 0.0);
        let k = a.forward(&x).unwrap();
        let m0 = k.data()[0].norm();
        assert!(k.data().iter().all(|v| (v.norm() - m0).abs() < 1e-14));
        assert!((k.norm() - x.norm()).abs() < 1e-14);

        let mut rng = rng::rng(4);
        let x = rand_tensor(&[8, 8], &mut rng);
        let back = a.adjoint(&a.forward(&x).unwrap()).unwrap();
        let n = a.normal(&x).unwrap();
        for ((p, q), r) in back.data().iter().zip(x.data()).zip(n.data()) {
            assert!((p - q).norm() < 1e-12 && (r - q).norm() < 1e-12);
        }
    }

    #[test]
    fn empty_mask_annihilates() {
        let a = ForwardModel::<f64>::single_channel(SamplingMask::empty(8, 8));
        let x = rand_tensor(&[8, 8], &mut rng::rng(1));
        assert!(a.forward(&x).unwrap().data().iter().all(|v| v.is_zero()));
    }

    #[test]
    fn adjoint_identity_all_kinds() {
        let mut rng = rng::rng(77);
        for a in models() {
            for _ in 0..20 {
                let x = rand_tensor(&a.image_dims(), &mut rng);
                let y = rand_tensor(&a.data_dims(), &mut rng);
                let lhs = a.forward(&x).unwrap().dot(&y);
                let rhs = x.dot(&a.adjoint(&y).unwrap());
                assert!((lhs - rhs).norm() <= 1e-6 * x.norm() * y.norm());
            }
        }
    }

    #[test]
    fn zero_measurement_adjoint() {
        for a in models() {
            let y = ComplexTensor::zeros(&a.data_dims());
            assert!(a.adjoint(&y).unwrap().data().iter().all(|v| v.is_zero()));
        }
    }

    #[test]
    fn normal_is_bit_identical_to_composition() {
        let mut rng = rng::rng(5);
        for a in models() {
            let x = rand_tensor(&a.image_dims(), &mut rng);
            let n = a.normal(&x).unwrap();
            let c = a.adjoint(&a.forward(&x).unwrap()).unwrap();
            assert_eq!(n, c);
            let q = x.dot(&n);
            assert!(q.re >= 0.0 && q.im.abs() < 1e-12 * q.re.max(1.0));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = &models()[2];
        assert!(matches!(
            a.forward(&ComplexTensor::zeros(&[4, 4])),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            a.adjoint(&ComplexTensor::zeros(&[32, 24])),
            Err(Error::Dimension(_))
        ));
        let coils = make_synthetic_coils::<f64>(16, 16, 2, 0).unwrap();
        assert!(ForwardModel::multi_channel(SamplingMask::full(16, 17), coils).is_err());
    }

    #[test]
    fn measurement_noise() {
        let a = ForwardModel::<f64>::single_channel(SamplingMask::full(256, 256));
        let x = rand_tensor(&[256, 256], &mut rng::rng(2));
        assert_eq!(a.simulate_measurement(&x, 0.0, 1).unwrap(), a.forward(&x).unwrap());
        assert!(a.simulate_measurement(&x, -1.0, 1).is_err());

        let sigma = 0.05;
        let b = a.simulate_measurement(&x, sigma, 9).unwrap();
        assert_eq!(b, a.simulate_measurement(&x, sigma, 9).unwrap());
        let clean = a.forward(&x).unwrap();
        let comps: Vec<f64> = b
            .data()
            .iter()
            .zip(clean.data())
            .flat_map(|(p, q)| [(p - q).re, (p - q).im])
            .take(100_000)
            .collect();
        let mean = comps.iter().sum::<f64>() / comps.len() as f64;
        let var = comps.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / comps.len() as f64;
        assert!((var.sqrt() - sigma).abs() / sigma < 0.05);

        // noise only where the mask samples
        let m = make_vd_mask(32, 32, 4.0, 0).unwrap();
        let a = ForwardModel::<f64>::single_channel(m.clone());
        let b = a
            .simulate_measurement(&ComplexTensor::zeros(&[32, 32]), 0.1, 3)
            .unwrap();
        for (v, &on) in b.data().iter().zip(m.as_slice()) {
            assert_eq!(v.is_zero(), !on);
        }
    }
}
