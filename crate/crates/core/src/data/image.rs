//! 8-bit grayscale PNG export of magnitude and error images.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::scalar::Real;
use crate::tensor::ComplexTensor;
use crate::{Error, Result};

fn write_gray(path: &Path, h: usize, w: usize, pixels: &[u8], text: &[(&str, String)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    for (k, v) in text {
        enc.add_text_chunk(k.to_string(), v.clone())
            .map_err(|e| Error::Format {
                offset: 0,
                msg: e.to_string(),
            })?;
    }
    let to_err = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut wr = enc.write_header().map_err(to_err)?;
    wr.write_image_data(pixels).map_err(to_err)?;
    wr.finish().map_err(to_err)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `|x|`, min-max normalized over the image.
pub fn save_magnitude_png<T: Real>(x: &ComplexTensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let (h, w) = x.shape2()?;
    let mag: Vec<f64> = x.data().iter().map(|v| v.norm().f64()).collect();
    let lo = mag.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px: Vec<u8> = mag.iter().map(|m| quantize((m - lo) / span)).collect();
    write_gray(
        path.as_ref(),
        h,
        w,
        &px,
        &[("magnitude_min", lo.to_string()), ("magnitude_max", hi.to_string())],
    )
}

/// Writes `|recon - target|` with white at `scale`; the scale is stored in a text chunk.
pub fn save_error_png<T: Real>(
    recon: &ComplexTensor<T>,
    target: &ComplexTensor<T>,
    scale: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    recon.same_dims(target, "error map")?;
    if !(scale > 0.0) {
        return Err(Error::Parameter(format!(
            "error-map scale must be positive, got {scale}"
        )));
    }
    let (h, w) = target.shape2()?;
    let px: Vec<u8> = recon
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| quantize((*a - *b).norm().f64() / scale))
        .collect();
    write_gray(path.as_ref(), h, w, &px, &[("error_scale", scale.to_string())])
}

/// Writes a sampling mask: white where acquired.
pub fn save_mask_png(mask: &crate::mask::SamplingMask, path: impl AsRef<Path>) -> Result<()> {
    let (h, w) = mask.shape();
    let px: Vec<u8> = mask.as_slice().iter().map(|&m| if m { 255 } else { 0 }).collect();
    write_gray(
        path.as_ref(),
        h,
        w,
        &px,
        &[("acceleration", mask.acceleration().to_string())],
    )
}
