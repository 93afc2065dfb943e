//! Dense row-major tensors and the complex <-> two-channel real conversion.

use num_traits::Zero;

use crate::scalar::{Cplx, Real};
use crate::{Error, Result};

fn check_dims(dims: &[usize], len: usize) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::Dimension("tensor needs at least one dimension".into()));
    }
    if dims.contains(&0) {
        return Err(Error::Dimension(format!("zero-sized dimension in {dims:?}")));
    }
    let n: usize = dims.iter().product();
    if n != len {
        return Err(Error::Dimension(format!(
            "dims {dims:?} imply {n} elements, data has {len}"
        )));
    }
    Ok(())
}

/// Complex-valued n-d array, row-major, stored interleaved as `Complex<T>`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor<T> {
    dims: Vec<usize>,
    data: Vec<Cplx<T>>,
}

/// Real-valued n-d array, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RealTensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> ComplexTensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<Cplx<T>>) -> Result<Self> {
        check_dims(&dims, data.len())?;
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self::new(dims.to_vec(), vec![Cplx::zero(); n]).expect("valid zero dims")
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> Cplx<T>) -> Self {
        let n: usize = dims.iter().product();
        Self::new(dims.to_vec(), (0..n).map(&mut f).collect()).expect("valid dims")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Cplx<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Cplx<T>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Cplx<T>> {
        self.data
    }

    /// `(rows, cols)` of a 2-D tensor.
    pub fn shape2(&self) -> Result<(usize, usize)> {
        match self.dims[..] {
            [h, w] => Ok((h, w)),
            _ => Err(Error::Dimension(format!(
                "expected a 2-D tensor, got dims {:?}",
                self.dims
            ))),
        }
    }

    pub fn norm(&self) -> T {
        crate::linalg::norm(&self.data)
    }

    /// Standard inner product `sum conj(self_i) * other_i`.
    pub fn dot(&self, other: &Self) -> Cplx<T> {
        crate::linalg::dot(&self.data, &other.data)
    }

    pub fn same_dims(&self, other: &Self, what: &str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!("{what}: {:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(())
    }

    /// Converts precision; exact when widening.
    pub fn cast<U: Real>(&self) -> ComplexTensor<U> {
        ComplexTensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .map(|c| Cplx::new(U::of(c.re.f64()), U::of(c.im.f64())))
                .collect(),
        }
    }
}

impl<T: Real> RealTensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        check_dims(&dims, data.len())?;
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self::new(dims.to_vec(), vec![T::zero(); n]).expect("valid zero dims")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn cast<U: Real>(&self) -> RealTensor<U> {
        RealTensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }
}

/// `H x W` complex image to `H x W x 2` real tensor (channel 0 = re, 1 = im).
pub fn complex_to_channels<T: Real>(x: &ComplexTensor<T>) -> Result<RealTensor<T>> {
    let (h, w) = x.shape2()?;
    let mut out = Vec::with_capacity(2 * h * w);
    for c in x.data() {
        out.push(c.re);
        out.push(c.im);
    }
    RealTensor::new(vec![h, w, 2], out)
}

/// Inverse of [`complex_to_channels`]; any leading dims are kept.
pub fn channels_to_complex<T: Real>(r: &RealTensor<T>) -> Result<ComplexTensor<T>> {
    let dims = r.dims();
    if dims.len() < 2 || *dims.last().unwrap() != 2 {
        return Err(Error::Dimension(format!(
            "expected trailing channel dim of 2, got {dims:?}"
        )));
    }
    let data = r.data().chunks_exact(2).map(|p| Cplx::new(p[0], p[1])).collect();
    ComplexTensor::new(dims[..dims.len() - 1].to_vec(), data)
}
