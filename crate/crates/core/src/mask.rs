//! Cartesian k-space sampling masks.

use rand::Rng as _;

use crate::{rng, Error, Result};

/// Boolean k-space mask (`true` = acquired), row-major `H x W`, centered so
/// the DC sample sits at `(H/2, W/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    h: usize,
    w: usize,
    mask: Vec<bool>,
    acceleration: f64,
    seed: u64,
}

/// Width of the variable-density Gaussian, as a fraction of `min(H, W)`.
pub const VD_WIDTH: f64 = 0.15;
/// Side of the fully sampled center block, as a fraction of each dim.
pub const VD_CENTER: f64 = 0.04;

impl SamplingMask {
    pub fn new(h: usize, w: usize, mask: Vec<bool>, acceleration: f64, seed: u64) -> Result<Self> {
        if mask.len() != h * w {
            return Err(Error::Dimension(format!(
                "mask has {} entries, grid is {h}x{w}",
                mask.len()
            )));
        }
        Ok(Self {
            h,
            w,
            mask,
            acceleration,
            seed,
        })
    }

    pub fn full(h: usize, w: usize) -> Self {
        Self::new(h, w, vec![true; h * w], 1.0, 0).unwrap()
    }

    pub fn empty(h: usize, w: usize) -> Self {
        Self::new(h, w, vec![false; h * w], f64::INFINITY, 0).unwrap()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.mask[y * self.w + x]
    }

    pub fn acceleration(&self) -> f64 {
        self.acceleration
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.mask.len() as f64
    }

    /// 0/1 real tensor for MTF export.
    pub fn to_tensor(&self) -> crate::RealTensor<f64> {
        crate::RealTensor::new(
            vec![self.h, self.w],
            self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap()
    }

    pub fn from_tensor(t: &crate::RealTensor<f64>) -> Result<Self> {
        let [h, w] = t.dims()[..] else {
            return Err(Error::Dimension(format!("mask must be 2-D, got {:?}", t.dims())));
        };
        let mask: Vec<bool> = t.data().iter().map(|&v| v != 0.0).collect();
        let n = mask.iter().filter(|&&m| m).count().max(1);
        Self::new(h, w, mask, (h * w) as f64 / n as f64, 0)
    }
}

/// Centered index range of length `k` inside `0..n`.
fn centered(n: usize, k: usize) -> std::ops::Range<usize> {
    let start = n / 2 - k / 2;
    start..start + k
}

/// Variable-density random mask with one decision per k-space location.
pub fn make_vd_mask(h: usize, w: usize, acceleration: f64, seed: u64) -> Result<SamplingMask> {
    vd_mask(h, w, acceleration, seed, false)
}

/// Variable-density random mask that acquires whole readout rows.
pub fn make_vd_line_mask(h: usize, w: usize, acceleration: f64, seed: u64) -> Result<SamplingMask> {
    vd_mask(h, w, acceleration, seed, true)
}

fn vd_mask(h: usize, w: usize, acceleration: f64, seed: u64, lines: bool) -> Result<SamplingMask> {
    if !(acceleration >= 1.0) || !acceleration.is_finite() {
        return Err(Error::Parameter(format!(
            "acceleration must be >= 1, got {acceleration}"
        )));
    }
    if h < 16 || w < 16 {
        return Err(Error::Parameter(format!(
            "mask grid must be at least 16x16, got {h}x{w}"
        )));
    }

    // Candidate sites: every (ky, kx) location, or every ky line.
    let sigma = VD_WIDTH * h.min(w) as f64;
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let block_h = (VD_CENTER * h as f64).ceil() as usize;
    let block_w = (VD_CENTER * w as f64).ceil() as usize;
    let (rows, cols) = (centered(h, block_h), centered(w, block_w));

    let n_sites = if lines { h } else { h * w };
    let mut forced = vec![false; n_sites];
    let mut density = vec![0.0; n_sites];
    for (s, (f, d)) in forced.iter_mut().zip(density.iter_mut()).enumerate() {
        let (y, x) = if lines { (s, w / 2) } else { (s / w, s % w) };
        let dist2 = if lines {
            (y as f64 - cy).powi(2)
        } else {
            (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)
        };
        *d = (-dist2 / (2.0 * sigma * sigma)).exp();
        *f = rows.contains(&y) && (lines || cols.contains(&x));
    }

    let target = ((n_sites as f64) / acceleration).round() as usize;
    let n_forced = forced.iter().filter(|&&f| f).count();
    let want_free = target.saturating_sub(n_forced);

    // Inclusion probabilities min(1, c * density) with c chosen by bisection
    // so the expected number of free picks equals `want_free`.
    let expected = |c: f64| -> f64 {
        density
            .iter()
            .zip(&forced)
            .filter(|(_, &f)| !f)
            .map(|(&d, _)| (c * d).min(1.0))
            .sum()
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while expected(hi) < want_free as f64 && hi < 1e12 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < want_free as f64 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = hi;

    // Bernoulli(p) includes a site when u < p; keeping the `want_free` sites
    // with the smallest u/p is the same rule with the threshold nudged so the
    // sampled count is exact.
    let mut rng = rng::substream(seed, rng::Stream::Mask, 0);
    let mut keys: Vec<(f64, usize)> = Vec::with_capacity(n_sites);
    for s in 0..n_sites {
        let u: f64 = rng.random();
        if !forced[s] {
            let p = (c * density[s]).min(1.0);
            let key = if p > 0.0 { u / p } else { f64::INFINITY };
            keys.push((key, s));
        }
    }
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut chosen = forced;
    for &(_, s) in keys.iter().take(want_free) {
        chosen[s] = true;
    }

    let mut mask = vec![false; h * w];
    for (s, _) in chosen.iter().enumerate().filter(|(_, &c)| c) {
        if lines {
            mask[s * w..(s + 1) * w].fill(true);
        } else {
            mask[s] = true;
        }
    }
    SamplingMask::new(h, w, mask, acceleration, seed)
}

/// Mask acquiring exactly the centered `kh x kw` block (low-pass / super-resolution).
pub fn make_lowpass_mask(h: usize, w: usize, kh: usize, kw: usize) -> Result<SamplingMask> {
    if kh == 0 || kw == 0 || kh > h || kw > w {
        return Err(Error::Parameter(format!(
            "low-pass block {kh}x{kw} does not fit in {h}x{w}"
        )));
    }
    let (rows, cols) = (centered(h, kh), centered(w, kw));
    let mut mask = vec![false; h * w];
    for y in rows {
        for x in cols.clone() {
            mask[y * w + x] = true;
        }
    }
    SamplingMask::new(h, w, mask, (h * w) as f64 / (kh * kw) as f64, 0)
}
