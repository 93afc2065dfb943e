//! MTF: the portable on-disk tensor format.
//!
//! Layout (all integers little-endian):
//!
//! | bytes    | content                                              |
//! |----------|------------------------------------------------------|
//! | 0..8     | ASCII magic `MODLTNSR`                               |
//! | 8        | version, always 1                                    |
//! | 9        | dtype: 0 real64, 1 complex64-pair, 2 real32, 3 complex32-pair |
//! | 10       | ndim                                                 |
//! | 11..16   | zero padding                                         |
//! | 16..     | `ndim` u64 dims, then the payload (complex interleaved re, im) |

use std::fs;
use std::path::Path;

use crate::scalar::{Cplx, Real};
use crate::tensor::{ComplexTensor, RealTensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MODLTNSR";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 16;

/// A tensor of whatever dtype a file happened to contain.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyTensor {
    Real64(RealTensor<f64>),
    Complex64(ComplexTensor<f64>),
    Real32(RealTensor<f32>),
    Complex32(ComplexTensor<f32>),
}

impl AnyTensor {
    pub fn dtype(&self) -> u8 {
        match self {
            AnyTensor::Real64(_) => 0,
            AnyTensor::Complex64(_) => 1,
            AnyTensor::Real32(_) => 2,
            AnyTensor::Complex32(_) => 3,
        }
    }

    pub fn dims(&self) -> &[usize] {
        match self {
            AnyTensor::Real64(t) => t.dims(),
            AnyTensor::Complex64(t) => t.dims(),
            AnyTensor::Real32(t) => t.dims(),
            AnyTensor::Complex32(t) => t.dims(),
        }
    }

    /// Complex tensor in precision `T`; fails for real payloads.
    pub fn into_complex<T: Real>(self) -> Result<ComplexTensor<T>> {
        match self {
            AnyTensor::Complex64(t) => Ok(t.cast()),
            AnyTensor::Complex32(t) => Ok(t.cast()),
            other => Err(Error::Format {
                offset: 9,
                msg: format!("expected complex dtype, found {}", other.dtype()),
            }),
        }
    }

    /// Real tensor in precision `T`; fails for complex payloads.
    pub fn into_real<T: Real>(self) -> Result<RealTensor<T>> {
        match self {
            AnyTensor::Real64(t) => Ok(t.cast()),
            AnyTensor::Real32(t) => Ok(t.cast()),
            other => Err(Error::Format {
                offset: 9,
                msg: format!("expected real dtype, found {}", other.dtype()),
            }),
        }
    }
}

/// Anything that can be written as an MTF file.
pub trait MtfEncode {
    fn dtype(&self) -> u8;
    fn dims(&self) -> &[usize];
    fn write_payload(&self, out: &mut Vec<u8>);
}

impl<T: Real> MtfEncode for RealTensor<T> {
    fn dtype(&self) -> u8 {
        T::REAL_DTYPE
    }
    fn dims(&self) -> &[usize] {
        RealTensor::dims(self)
    }
    fn write_payload(&self, out: &mut Vec<u8>) {
        for &v in self.data() {
            v.put_le(out);
        }
    }
}

impl<T: Real> MtfEncode for ComplexTensor<T> {
    fn dtype(&self) -> u8 {
        T::COMPLEX_DTYPE
    }
    fn dims(&self) -> &[usize] {
        ComplexTensor::dims(self)
    }
    fn write_payload(&self, out: &mut Vec<u8>) {
        for c in self.data() {
            c.re.put_le(out);
            c.im.put_le(out);
        }
    }
}

impl MtfEncode for AnyTensor {
    fn dtype(&self) -> u8 {
        AnyTensor::dtype(self)
    }
    fn dims(&self) -> &[usize] {
        AnyTensor::dims(self)
    }
    fn write_payload(&self, out: &mut Vec<u8>) {
        match self {
            AnyTensor::Real64(t) => t.write_payload(out),
            AnyTensor::Complex64(t) => t.write_payload(out),
            AnyTensor::Real32(t) => t.write_payload(out),
            AnyTensor::Complex32(t) => t.write_payload(out),
        }
    }
}

pub fn encode(t: &impl MtfEncode) -> Vec<u8> {
    let dims = t.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * dims.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(t.dtype());
    out.push(u8::try_from(dims.len()).expect("ndim fits in u8"));
    out.extend_from_slice(&[0u8; 5]);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    t.write_payload(&mut out);
    out
}

fn fmt_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        offset,
        msg: msg.into(),
    }
}

pub fn decode(bytes: &[u8]) -> Result<AnyTensor> {
    if bytes.len() < HEADER_LEN {
        return Err(fmt_err(bytes.len(), "truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(fmt_err(0, "bad magic"));
    }
    if bytes[8] != VERSION {
        return Err(fmt_err(8, format!("unsupported version {}", bytes[8])));
    }
    let dtype = bytes[9];
    let ndim = bytes[10] as usize;
    if ndim == 0 {
        return Err(fmt_err(10, "ndim must be at least 1"));
    }
    let dims_end = HEADER_LEN + 8 * ndim;
    if bytes.len() < dims_end {
        return Err(fmt_err(bytes.len(), "truncated dims"));
    }
    let mut dims = Vec::with_capacity(ndim);
    for (i, chunk) in bytes[HEADER_LEN..dims_end].chunks_exact(8).enumerate() {
        let d = u64::from_le_bytes(chunk.try_into().unwrap());
        if d == 0 {
            return Err(fmt_err(HEADER_LEN + 8 * i, "zero dimension"));
        }
        dims.push(usize::try_from(d).map_err(|_| fmt_err(HEADER_LEN + 8 * i, "dim overflow"))?);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| fmt_err(HEADER_LEN, "element count overflow"))?;
    let payload = &bytes[dims_end..];

    fn read_real<T: Real>(p: &[u8], n: usize, at: usize) -> Result<Vec<T>> {
        let need = n * T::BYTES;
        if p.len() != need {
            return Err(fmt_err(
                at + p.len().min(need),
                format!("payload is {} bytes, expected {need}", p.len()),
            ));
        }
        Ok(p.chunks_exact(T::BYTES).map(T::get_le).collect())
    }
    fn read_cplx<T: Real>(p: &[u8], n: usize, at: usize) -> Result<Vec<Cplx<T>>> {
        let flat = read_real::<T>(p, 2 * n, at)?;
        Ok(flat.chunks_exact(2).map(|c| Cplx::new(c[0], c[1])).collect())
    }

    Ok(match dtype {
        0 => AnyTensor::Real64(RealTensor::new(dims, read_real(payload, count, dims_end)?)?),
        1 => AnyTensor::Complex64(ComplexTensor::new(dims, read_cplx(payload, count, dims_end)?)?),
        2 => AnyTensor::Real32(RealTensor::new(dims, read_real(payload, count, dims_end)?)?),
        3 => AnyTensor::Complex32(ComplexTensor::new(dims, read_cplx(payload, count, dims_end)?)?),
        other => return Err(fmt_err(9, format!("unknown dtype {other}"))),
    })
}

pub fn save(t: &impl MtfEncode, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<AnyTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
