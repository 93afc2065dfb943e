//! Residual CNN denoiser `D_w(x) = x + N_w(x)`.
//!
//! `N_w` is a stack of `conv3x3 -> BN -> ReLU` layers whose last layer drops
//! the ReLU so negative noise estimates survive. Complex images enter as two
//! real channels (re, im) and leave the same way.

use rand_distr::{Distribution, Normal};

use crate::nn::batchnorm::{batchnorm_backward, batchnorm_infer, batchnorm_train, update_running, BnCache, Mode};
use crate::nn::conv::{conv2d_backward, conv2d_forward};
use crate::nn::relu::{relu_backward, relu_inplace};
use crate::scalar::{Cplx, Real};
use crate::tensor::{ComplexTensor, RealTensor};
use crate::{rng, Error, Result};

/// Depth and width of `N_w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Arch {
    pub layers: usize,
    pub filters: usize,
}

impl Arch {
    pub const PAPER: Arch = Arch { layers: 5, filters: 64 };

    pub fn new(layers: usize, filters: usize) -> Result<Self> {
        if layers == 0 || filters == 0 {
            return Err(Error::Parameter(format!(
                "denoiser needs >= 1 layer and >= 1 filter, got {layers}/{filters}"
            )));
        }
        Ok(Self { layers, filters })
    }

    /// `(Cin, Cout)` of layer `l`.
    pub fn channels(&self, l: usize) -> (usize, usize) {
        let cin = if l == 0 { 2 } else { self.filters };
        let cout = if l + 1 == self.layers { 2 } else { self.filters };
        (cin, cout)
    }
}

/// Initial regularization weight.
pub const LAMBDA_INIT: f64 = 0.05;

pub fn softplus<T: Real>(theta: T) -> T {
    // log(1 + e^t), stable for large |t|
    if theta > T::zero() {
        theta + (-theta).exp().ln_1p()
    } else {
        theta.exp().ln_1p()
    }
}

pub fn softplus_inv(lambda: f64) -> f64 {
    lambda + (-(-lambda).exp_m1()).ln()
}

pub fn sigmoid<T: Real>(theta: T) -> T {
    T::one() / (T::one() + (-theta).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayerParams<T> {
    /// `[3, 3, Cin, Cout]`
    pub kernels: RealTensor<T>,
    pub bn_gamma: Vec<T>,
    pub bn_beta: Vec<T>,
    pub bn_running_mean: Vec<T>,
    pub bn_running_var: Vec<T>,
}

impl<T: Real> ConvLayerParams<T> {
    fn fresh(cin: usize, cout: usize) -> Self {
        Self {
            kernels: RealTensor::zeros(&[3, 3, cin, cout]),
            bn_gamma: vec![T::one(); cout],
            bn_beta: vec![T::zero(); cout],
            bn_running_mean: vec![T::zero(); cout],
            bn_running_var: vec![T::one(); cout],
        }
    }

    pub fn cin(&self) -> usize {
        self.kernels.dims()[2]
    }

    pub fn cout(&self) -> usize {
        self.kernels.dims()[3]
    }

    /// Kernels plus all four BN vectors.
    pub fn count(&self) -> usize {
        self.kernels.len() + 4 * self.cout()
    }
}

/// Weights of `N_w` plus the regularization parameter `lambda = softplus(theta_lambda)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserParams<T> {
    pub layers: Vec<ConvLayerParams<T>>,
    pub theta_lambda: T,
}

impl<T: Real> DenoiserParams<T> {
    /// He-normal kernels (`std = sqrt(2 / (9 Cin))`). The final BN scale
    /// starts at zero, so the final layer outputs zero and the untrained
    /// denoiser is the identity. Zeroing the final kernels instead would let
    /// BN blow the first small update up to unit variance.
    pub fn init(arch: Arch, seed: u64) -> Self {
        let mut rng = rng::substream(seed, rng::Stream::Init, 0);
        let layers = (0..arch.layers)
            .map(|l| {
                let (cin, cout) = arch.channels(l);
                let mut p = ConvLayerParams::fresh(cin, cout);
                let normal = Normal::new(0.0, (2.0 / (9.0 * cin as f64)).sqrt()).unwrap();
                for v in p.kernels.data_mut() {
                    *v = T::of(normal.sample(&mut rng));
                }
                if l + 1 == arch.layers {
                    p.bn_gamma.iter_mut().for_each(|g| *g = T::zero());
                }
                p
            })
            .collect();
        Self {
            layers,
            theta_lambda: T::of(softplus_inv(LAMBDA_INIT)),
        }
    }

    /// All kernels zero: `N_w = 0`.
    pub fn zeros(arch: Arch) -> Self {
        Self {
            layers: (0..arch.layers)
                .map(|l| {
                    let (cin, cout) = arch.channels(l);
                    ConvLayerParams::fresh(cin, cout)
                })
                .collect(),
            theta_lambda: T::of(softplus_inv(LAMBDA_INIT)),
        }
    }

    pub fn arch(&self) -> Arch {
        Arch {
            layers: self.layers.len(),
            filters: self.layers.first().map_or(0, |l| l.cout()),
        }
    }

    pub fn lambda(&self) -> T {
        softplus(self.theta_lambda)
    }

    pub fn set_lambda(&mut self, lambda: f64) {
        self.theta_lambda = T::of(softplus_inv(lambda));
    }

    /// Optimizer-visible parameters, in a fixed order: per layer
    /// kernels, gamma, beta; then `theta_lambda`.
    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::with_capacity(3 * self.layers.len() + 1);
        for l in &mut self.layers {
            out.push(l.kernels.data_mut());
            out.push(&mut l.bn_gamma);
            out.push(&mut l.bn_beta);
        }
        out.push(std::slice::from_mut(&mut self.theta_lambda));
        out
    }

    /// Checksum of the trainable values, used to catch stale caches.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |v: T| {
            h ^= v.f64().to_bits();
            h = h.wrapping_mul(0x0000_0100_0000_01B3).rotate_left(5);
        };
        for l in &self.layers {
            l.kernels.data().iter().for_each(|&v| eat(v));
            l.bn_gamma.iter().for_each(|&v| eat(v));
            l.bn_beta.iter().for_each(|&v| eat(v));
        }
        h
    }

    /// Folds the batch statistics of a train-mode pass into the running stats.
    pub fn absorb_batch_stats(&mut self, cache: &DenoiserCache<T>) {
        for (l, c) in self.layers.iter_mut().zip(&cache.layers) {
            update_running(&mut l.bn_running_mean, &mut l.bn_running_var, &c.bn);
        }
    }

    pub fn cast<U: Real>(&self) -> DenoiserParams<U> {
        let v = |x: &[T]| x.iter().map(|&a| U::of(a.f64())).collect::<Vec<U>>();
        DenoiserParams {
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayerParams {
                    kernels: l.kernels.cast(),
                    bn_gamma: v(&l.bn_gamma),
                    bn_beta: v(&l.bn_beta),
                    bn_running_mean: v(&l.bn_running_mean),
                    bn_running_var: v(&l.bn_running_var),
                })
                .collect(),
            theta_lambda: U::of(self.theta_lambda.f64()),
        }
    }
}

/// Scalar count following the usual table convention: conv kernels, all
/// four BN vectors (including running mean/variance), and `lambda`.
pub fn count_params<T: Real>(p: &DenoiserParams<T>) -> usize {
    p.layers.iter().map(ConvLayerParams::count).sum::<usize>() + 1
}

/// Same count computed from the architecture alone.
pub fn count_params_arch(arch: Arch) -> usize {
    (0..arch.layers)
        .map(|l| {
            let (cin, cout) = arch.channels(l);
            9 * cin * cout + 4 * cout
        })
        .sum::<usize>()
        + 1
}

#[derive(Clone, Debug)]
pub struct LayerCache<T> {
    input: RealTensor<T>,
    bn: BnCache<T>,
    /// BN output before the ReLU; absent on the last layer.
    pre_relu: Option<RealTensor<T>>,
}

/// State saved by a train-mode forward pass.
#[derive(Clone, Debug)]
pub struct DenoiserCache<T> {
    layers: Vec<LayerCache<T>>,
    fingerprint: u64,
    batch: usize,
    h: usize,
    w: usize,
}

impl<T: Real> DenoiserCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads<T> {
    pub kernels: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

/// Gradients aligned with [`DenoiserParams::trainable_mut`].
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserGrads<T> {
    pub layers: Vec<LayerGrads<T>>,
    pub theta_lambda: T,
}

impl<T: Real> DenoiserGrads<T> {
    pub fn zeros_like(p: &DenoiserParams<T>) -> Self {
        Self {
            layers: p
                .layers
                .iter()
                .map(|l| LayerGrads {
                    kernels: vec![T::zero(); l.kernels.len()],
                    gamma: vec![T::zero(); l.cout()],
                    beta: vec![T::zero(); l.cout()],
                })
                .collect(),
            theta_lambda: T::zero(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        fn add<T: Real>(a: &mut [T], b: &[T]) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = *x + *y;
            }
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            add(&mut a.kernels, &b.kernels);
            add(&mut a.gamma, &b.gamma);
            add(&mut a.beta, &b.beta);
        }
        self.theta_lambda = self.theta_lambda + other.theta_lambda;
    }

    pub fn as_slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::with_capacity(3 * self.layers.len() + 1);
        for l in &self.layers {
            out.push(&l.kernels);
            out.push(&l.gamma);
            out.push(&l.beta);
        }
        out.push(std::slice::from_ref(&self.theta_lambda));
        out
    }
}

fn stack_channels<T: Real>(x: &[ComplexTensor<T>]) -> Result<(RealTensor<T>, usize, usize)> {
    let first = x
        .first()
        .ok_or_else(|| Error::Dimension("denoiser needs a non-empty batch".into()))?;
    let (h, w) = first.shape2()?;
    let mut data = Vec::with_capacity(x.len() * h * w * 2);
    for img in x {
        if img.dims() != [h, w] {
            return Err(Error::Dimension(format!(
                "batch mixes image sizes {:?} and {:?}",
                first.dims(),
                img.dims()
            )));
        }
        for c in img.data() {
            data.push(c.re);
            data.push(c.im);
        }
    }
    Ok((RealTensor::new(vec![x.len(), h, w, 2], data)?, h, w))
}

fn check_params<T: Real>(p: &DenoiserParams<T>) -> Result<()> {
    let n = p.layers.len();
    if n == 0 {
        return Err(Error::Dimension("denoiser has no layers".into()));
    }
    for (i, l) in p.layers.iter().enumerate() {
        if l.kernels.dims().len() != 4 || l.kernels.dims()[..2] != [3, 3] {
            return Err(Error::Dimension(format!("layer {i}: kernels must be 3x3xCinxCout")));
        }
        if i == 0 && l.cin() != 2 || i + 1 == n && l.cout() != 2 {
            return Err(Error::Dimension(
                "first layer must take 2 channels and last layer must emit 2".into(),
            ));
        }
        if i > 0 && l.cin() != p.layers[i - 1].cout() {
            return Err(Error::Dimension(format!("layer {i}: channel chain broken")));
        }
        let c = l.cout();
        if l.bn_gamma.len() != c || l.bn_beta.len() != c || l.bn_running_mean.len() != c || l.bn_running_var.len() != c
        {
            return Err(Error::Dimension(format!("layer {i}: BN vectors must have {c} entries")));
        }
    }
    Ok(())
}

/// `z = x + N_w(x)` for a batch of `H x W` complex images. Train mode uses
/// batch statistics and returns a cache; running statistics are left alone
/// (see [`DenoiserParams::absorb_batch_stats`]).
pub fn denoiser_forward<T: Real>(
    x: &[ComplexTensor<T>],
    p: &DenoiserParams<T>,
    mode: Mode,
) -> Result<(Vec<ComplexTensor<T>>, Option<DenoiserCache<T>>)> {
    check_params(p)?;
    let (mut act, h, w) = stack_channels(x)?;
    let n = p.layers.len();
    let mut caches = Vec::with_capacity(if mode == Mode::Train { n } else { 0 });
    for (i, layer) in p.layers.iter().enumerate() {
        let conv = conv2d_forward(&act, &layer.kernels)?;
        let last = i + 1 == n;
        let mut out = match mode {
            Mode::Train => {
                let (y, bn) = batchnorm_train(&conv, &layer.bn_gamma, &layer.bn_beta)?;
                caches.push(LayerCache {
                    input: act,
                    bn,
                    pre_relu: (!last).then(|| y.clone()),
                });
                y
            }
            Mode::Infer => batchnorm_infer(
                &conv,
                &layer.bn_gamma,
                &layer.bn_beta,
                &layer.bn_running_mean,
                &layer.bn_running_var,
            )?,
        };
        if !last {
            relu_inplace(out.data_mut());
        }
        act = out;
    }

    let per = h * w * 2;
    let z = x
        .iter()
        .zip(act.data().chunks_exact(per))
        .map(|(img, noise)| {
            let data = img
                .data()
                .iter()
                .zip(noise.chunks_exact(2))
                .map(|(v, nz)| v + Cplx::new(nz[0], nz[1]))
                .collect();
            ComplexTensor::new(vec![h, w], data)
        })
        .collect::<Result<Vec<_>>>()?;
    let cache = (mode == Mode::Train).then(|| DenoiserCache {
        layers: caches,
        fingerprint: p.fingerprint(),
        batch: x.len(),
        h,
        w,
    });
    Ok((z, cache))
}

/// Reverse pass of a train-mode [`denoiser_forward`]. `grad_x` includes the
/// identity contribution of the residual skip.
pub fn denoiser_backward<T: Real>(
    grad_z: &[ComplexTensor<T>],
    cache: &DenoiserCache<T>,
    p: &DenoiserParams<T>,
) -> Result<(Vec<ComplexTensor<T>>, DenoiserGrads<T>)> {
    if cache.fingerprint != p.fingerprint() || cache.layers.len() != p.layers.len() {
        return Err(Error::Contract(
            "denoiser cache was produced with different parameters".into(),
        ));
    }
    if grad_z.len() != cache.batch {
        return Err(Error::Contract(format!(
            "gradient batch {} vs cached batch {}",
            grad_z.len(),
            cache.batch
        )));
    }
    let (mut g, h, w) = stack_channels(grad_z)?;
    if (h, w) != (cache.h, cache.w) {
        return Err(Error::Contract("gradient image size differs from cache".into()));
    }
    let mut grads = DenoiserGrads::zeros_like(p);
    for i in (0..p.layers.len()).rev() {
        let lc = &cache.layers[i];
        let layer = &p.layers[i];
        if let Some(pre) = &lc.pre_relu {
            relu_backward(g.data_mut(), pre.data());
        }
        let (g_conv, gg, gb) = batchnorm_backward(&g, &lc.bn, &layer.bn_gamma)?;
        let (g_in, gk) = conv2d_backward(&lc.input, &layer.kernels, &g_conv)?;
        grads.layers[i] = LayerGrads {
            kernels: gk.into_data(),
            gamma: gg,
            beta: gb,
        };
        g = g_in;
    }
    let per = h * w * 2;
    let grad_x = grad_z
        .iter()
        .zip(g.data().chunks_exact(per))
        .map(|(gz, gn)| {
            let data = gz
                .data()
                .iter()
                .zip(gn.chunks_exact(2))
                .map(|(v, c)| v + Cplx::new(c[0], c[1]))
                .collect();
            ComplexTensor::new(vec![h, w], data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((grad_x, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    fn img(h: usize, w: usize, seed: u64) -> ComplexTensor<f64> {
        use rand::Rng;
        let mut r = rng::rng(seed);
        ComplexTensor::from_fn(&[h, w], |_| Cplx::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5))
    }

    #[test]
    fn paper_parameter_table() {
        let p = DenoiserParams::<f32>::init(Arch::PAPER, 0);
        let per: Vec<usize> = p.layers.iter().map(ConvLayerParams::count).collect();
        assert_eq!(per, vec![1408, 37120, 37120, 37120, 1160]);
        assert_eq!(count_params(&p), 113_929);
        assert_eq!(count_params_arch(Arch::PAPER), 113_929);
    }

    #[test]
    fn zero_network_is_identity() {
        let p = DenoiserParams::<f64>::zeros(Arch::new(3, 4).unwrap());
        let x = vec![img(6, 5, 1), img(6, 5, 2)];
        for mode in [Mode::Train, Mode::Infer] {
            let (z, _) = denoiser_forward(&x, &p, mode).unwrap();
            assert_eq!(z, x);
        }
        let init = DenoiserParams::<f64>::init(Arch::new(3, 4).unwrap(), 3);
        let (z, cache) = denoiser_forward(&x, &init, Mode::Train).unwrap();
        assert_eq!(z, x);

        let g = vec![img(6, 5, 7), img(6, 5, 8)];
        let (gx, _) = denoiser_backward(&g, cache.as_ref().unwrap(), &init).unwrap();
        assert_eq!(gx, g);
    }

    #[test]
    fn zero_gradient_in_zero_out() {
        let p = DenoiserParams::<f64>::init(Arch::new(3, 4).unwrap(), 5);
        let mut p2 = p.clone();
        p2.layers[2].kernels.data_mut()[0] = 0.3;
        let x = vec![img(5, 5, 1)];
        let (_, cache) = denoiser_forward(&x, &p2, Mode::Train).unwrap();
        let g = vec![ComplexTensor::zeros(&[5, 5])];
        let (gx, grads) = denoiser_backward(&g, cache.as_ref().unwrap(), &p2).unwrap();
        assert!(gx[0].data().iter().all(|v| v.is_zero()));
        assert!(grads.as_slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn shapes_preserved() {
        let p = DenoiserParams::<f32>::init(Arch::new(4, 3).unwrap(), 1);
        for (h, w) in [(3, 3), (7, 4), (16, 9)] {
            let x = vec![img(h, w, 3).cast::<f32>()];
            let (z, _) = denoiser_forward(&x, &p, Mode::Infer).unwrap();
            assert_eq!(z[0].dims(), &[h, w]);
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut p = DenoiserParams::<f64>::init(Arch::new(2, 3).unwrap(), 1);
        let x = vec![img(4, 4, 1)];
        let (_, cache) = denoiser_forward(&x, &p, Mode::Train).unwrap();
        p.layers[0].bn_beta[0] = 1.0;
        let err = denoiser_backward(&x, cache.as_ref().unwrap(), &p);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn infer_mode_is_pure_train_returns_cache() {
        let mut p = DenoiserParams::<f64>::init(Arch::new(3, 4).unwrap(), 9);
        p.layers[2]
            .kernels
            .data_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = (i as f64).sin() * 0.1);
        let before = p.clone();
        let x = vec![img(6, 6, 4)];
        let (a, none) = denoiser_forward(&x, &p, Mode::Infer).unwrap();
        assert!(none.is_none());
        let (b, _) = denoiser_forward(&x, &p, Mode::Infer).unwrap();
        assert_eq!(a, b);
        assert_eq!(p, before);

        let (_, cache) = denoiser_forward(&x, &p, Mode::Train).unwrap();
        p.absorb_batch_stats(cache.as_ref().unwrap());
        assert_eq!(p.fingerprint(), before.fingerprint());
        assert_ne!(p.layers[0].bn_running_mean, before.layers[0].bn_running_mean);
    }

    #[test]
    fn lambda_reparametrization() {
        let p = DenoiserParams::<f64>::init(Arch::new(1, 1).unwrap(), 0);
        assert!((p.lambda() - LAMBDA_INIT).abs() < 1e-12);
        for t in [-30.0, -1.0, 0.0, 2.0, 40.0] {
            assert!((softplus_inv(softplus(t)) - t).abs() < 1e-9 * t.abs().max(1.0) || t < -20.0);
            let d = (softplus(t + 1e-6) - softplus(t - 1e-6)) / 2e-6;
            assert!((d - sigmoid(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn malformed_params() {
        let mut p = DenoiserParams::<f64>::init(Arch::new(2, 3).unwrap(), 0);
        p.layers[1].bn_gamma.pop();
        assert!(denoiser_forward(&[img(4, 4, 0)], &p, Mode::Infer).is_err());
        assert!(denoiser_forward(
            &[],
            &DenoiserParams::<f64>::zeros(Arch::new(1, 1).unwrap()),
            Mode::Infer
        )
        .is_err());
    }
}
