//! Isotropic Gaussian denoising and the separable 1-D filter passes shared with
//! the Hessian computation.

use crate::error::{Error, Result};
use crate::stack_io::Frame;

/// Kernels are truncated at this many standard deviations.
pub const TRUNCATE_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurParams {
    /// Standard deviation in pixels.
    pub sigma: f64,
}

impl Default for BlurParams {
    fn default() -> Self {
        Self { sigma: 4.0 }
    }
}

impl BlurParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigma > 0.0 && self.sigma.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!(
                "blur sigma must be positive, got {}",
                self.sigma
            )))
        }
    }
}

pub fn kernel_radius(sigma: f64) -> usize {
    ((TRUNCATE_SIGMAS * sigma).ceil() as usize).max(1)
}

/// Sampled Gaussian on `-r..=r`, renormalized to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = kernel_radius(sigma) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// One 1-D filter, applied as a correlation with edge replication.
#[derive(Debug, Clone)]
pub(crate) enum Taps {
    /// Full symmetric kernel of odd length `2r + 1`.
    Smooth(Vec<f64>),
    /// Weights `w[j-1]` for offsets `j = 1..=r`, applied as
    /// `sum_j w * (f(x+j) - f(x-j))`.
    Odd(Vec<f64>),
    /// Weights for offsets `j = 1..=r`, applied as
    /// `sum_j w * (f(x+j) + f(x-j) - 2 f(x))`. Vanishes exactly on constants.
    Even(Vec<f64>),
}

impl Taps {
    fn radius(&self) -> usize {
        match self {
            Taps::Smooth(k) => k.len() / 2,
            Taps::Odd(k) | Taps::Even(k) => k.len(),
        }
    }

    /// Applies the filter at `c` (index into `line`, which is padded by at
    /// least `radius` on both sides).
    #[inline]
    fn apply(&self, line: &[f64], c: usize) -> f64 {
        match self {
            Taps::Smooth(k) => {
                let r = k.len() / 2;
                k.iter().zip(&line[c - r..=c + r]).map(|(w, v)| w * v).sum()
            }
            Taps::Odd(k) => k
                .iter()
                .enumerate()
                .map(|(j, w)| w * (line[c + j + 1] - line[c - j - 1]))
                .sum(),
            Taps::Even(k) => {
                let mid = line[c];
                k.iter()
                    .enumerate()
                    .map(|(j, w)| w * ((line[c + j + 1] - mid) + (line[c - j - 1] - mid)))
                    .sum()
            }
        }
    }
}

/// Filters every row (the x direction).
pub(crate) fn filter_rows(data: &[f64], width: usize, height: usize, taps: &Taps) -> Vec<f64> {
    let r = taps.radius();
    let mut out = vec![0.0; data.len()];
    let mut line = vec![0.0; width + 2 * r];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for (i, slot) in line.iter_mut().enumerate() {
            let x = (i as isize - r as isize).clamp(0, width as isize - 1) as usize;
            *slot = row[x];
        }
        let dst = &mut out[y * width..(y + 1) * width];
        for (x, d) in dst.iter_mut().enumerate() {
            *d = taps.apply(&line, x + r);
        }
    }
    out
}

/// Filters every column (the y direction).
pub(crate) fn filter_cols(data: &[f64], width: usize, height: usize, taps: &Taps) -> Vec<f64> {
    let r = taps.radius();
    let mut out = vec![0.0; data.len()];
    let mut line = vec![0.0; height + 2 * r];
    // Gather-per-column would stride through memory; process blocks of
    // columns so each input row is read contiguously.
    const BLOCK: usize = 64;
    let mut block = vec![0.0; BLOCK * (height + 2 * r)];
    for x0 in (0..width).step_by(BLOCK) {
        let bw = BLOCK.min(width - x0);
        let stride = height + 2 * r;
        for i in 0..stride {
            let y = (i as isize - r as isize).clamp(0, height as isize - 1) as usize;
            let src = &data[y * width + x0..y * width + x0 + bw];
            for (b, &v) in src.iter().enumerate() {
                block[b * stride + i] = v;
            }
        }
        for b in 0..bw {
            line.copy_from_slice(&block[b * stride..(b + 1) * stride]);
            for y in 0..height {
                out[y * width + x0 + b] = taps.apply(&line, y + r);
            }
        }
    }
    out
}

/// Convolves `frame` with a normalized, truncated 2-D Gaussian (separable,
/// edge-replicated). The result stays within the input's value range.
pub fn gaussian_blur(frame: &Frame, params: &BlurParams) -> Result<Frame> {
    params.validate()?;
    let (w, h) = (frame.width(), frame.height());
    let taps = Taps::Smooth(gaussian_kernel(params.sigma));
    let tmp = filter_rows(frame.pixels(), w, h, &taps);
    let mut out = filter_cols(&tmp, w, h, &taps);
    let (lo, hi) = frame.min_max();
    out.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    frame.with_pixels(out)
}
