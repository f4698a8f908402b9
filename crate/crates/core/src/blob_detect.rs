//! Multi-scale determinant-of-Hessian blob detection.
//!
//! For every configured scale the frame is differentiated with sampled
//! derivative-of-Gaussian filters and the scale-normalized response
//! `sigma^4 * (Lxx * Lyy - Lxy^2)` is computed. The per-pixel maximum over
//! scales forms a [`DetMap`]; pixels strictly above the frame's percentile
//! threshold (and with a bright-blob Hessian, i.e. positive determinant and
//! negative trace) form 8-connected regions, and each region yields one
//! [`AtomCenter`].

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::blend::{fit_gaussians, Window};
use crate::error::{Error, Result};
use crate::preprocess::{filter_cols, filter_rows, gaussian_blur, gaussian_kernel, kernel_radius, BlurParams, Taps};
use crate::stack_io::{Frame, ImageStack};

/// One detection in one frame. `x` is the column and `y` the row, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomCenter {
    pub frame_index: usize,
    pub x: f64,
    pub y: f64,
    /// Mean intensity of the (denoised) frame over the region.
    pub intensity: f64,
    pub region_px: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CentroidMode {
    /// Determinant-weighted mean of member pixel coordinates.
    #[default]
    Weighted,
    /// Unweighted mean of member pixel coordinates.
    Plain,
}

impl std::str::FromStr for CentroidMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(CentroidMode::Weighted),
            "plain" => Ok(CentroidMode::Plain),
            other => Err(Error::InvalidParam(format!(
                "unknown centroid mode `{other}` (expected plain or weighted)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// How the per-pixel response is chosen across scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleSelection {
    /// Plain maximum over all scales.
    Max,
    /// Maximum over the run of scales, from the finest up, at which the pixel
    /// stays a bright blob. Keeps coarse scales from bridging close neighbors.
    #[default]
    Coherent,
}

impl std::str::FromStr for ScaleSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(ScaleSelection::Max),
            "coherent" => Ok(ScaleSelection::Coherent),
            other => Err(Error::InvalidParam(format!(
                "unknown scale selection `{other}` (expected max or coherent)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionParams {
    /// Denoising applied before detection; `None` detects on the frame as given.
    pub blur: Option<BlurParams>,
    /// Detection scales in pixels, strictly increasing.
    pub scales: Vec<f64>,
    pub scale_selection: ScaleSelection,
    /// Threshold quantile of the determinant map, in `(0, 1)`.
    pub percentile: f64,
    pub min_region_px: usize,
    pub connectivity: Connectivity,
    pub centroid: CentroidMode,
    /// Re-analyze oversized regions to split merged blobs.
    pub nested_pass: bool,
    /// A region is re-analyzed when it is larger than this multiple of the
    /// median size of the frame's other regions.
    pub nested_size_factor: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            blur: Some(BlurParams::default()),
            scales: vec![2.0, 3.0, 4.0, 6.0, 8.0, 12.0],
            scale_selection: ScaleSelection::Coherent,
            percentile: 0.60,
            min_region_px: 5,
            connectivity: Connectivity::Eight,
            centroid: CentroidMode::Weighted,
            nested_pass: false,
            nested_size_factor: 4.0,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(b) = &self.blur {
            b.validate()?;
        }
        validate_scales(&self.scales)?;
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return Err(Error::InvalidParam(format!(
                "percentile must lie in (0, 1), got {}",
                self.percentile
            )));
        }
        if self.min_region_px < 1 {
            return Err(Error::InvalidParam("min_region_px must be at least 1".into()));
        }
        if !(self.nested_size_factor >= 0.0 && self.nested_size_factor.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "nested size factor must be non-negative, got {}",
                self.nested_size_factor
            )));
        }
        Ok(())
    }
}

fn validate_scales(scales: &[f64]) -> Result<()> {
    if scales.is_empty() {
        return Err(Error::InvalidParam("scale set is empty".into()));
    }
    if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParam(format!("scales must be positive, got {scales:?}")));
    }
    if scales.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParam(format!(
            "scales must be strictly increasing, got {scales:?}"
        )));
    }
    Ok(())
}

/// Per-pixel maximum of the scale-normalized Hessian determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct DetMap {
    pub width: usize,
    pub height: usize,
    pub det: Vec<f64>,
    /// Scale at which `det` was attained.
    pub best_scale: Vec<f64>,
    /// Whether the Hessian at the best scale has negative trace (a bright blob
    /// rather than a dark one).
    pub bright: Vec<bool>,
}

impl DetMap {
    /// Map with every pixel marked bright, for hand-built determinant grids.
    pub fn from_det(width: usize, height: usize, det: Vec<f64>, scale: f64) -> Self {
        assert_eq!(det.len(), width * height);
        Self {
            width,
            height,
            best_scale: vec![scale; det.len()],
            bright: vec![true; det.len()],
            det,
        }
    }
}

struct Hessian {
    det: Vec<f64>,
    trace: Vec<f64>,
}

fn derivative_taps(sigma: f64) -> (Taps, Taps, Taps) {
    let r = kernel_radius(sigma);
    let g: Vec<f64> = (0..=r)
        .map(|j| (-((j * j) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    // first derivative: sum_j w_j (f(x+j) - f(x-j)) == 1 on f(x) = x
    let mut d1: Vec<f64> = (1..=r).map(|j| j as f64 * g[j]).collect();
    let m1: f64 = d1.iter().enumerate().map(|(i, w)| 2.0 * (i + 1) as f64 * w).sum();
    d1.iter_mut().for_each(|w| *w /= m1);
    // second derivative: == 2 on f(x) = x^2, exactly 0 on constants
    let mut d2: Vec<f64> = (1..=r)
        .map(|j| ((j * j) as f64 / (sigma * sigma) - 1.0) * g[j])
        .collect();
    let m2: f64 = d2.iter().enumerate().map(|(i, w)| ((i + 1) * (i + 1)) as f64 * w).sum();
    d2.iter_mut().for_each(|w| *w /= m2);
    (Taps::Smooth(gaussian_kernel(sigma)), Taps::Odd(d1), Taps::Even(d2))
}

fn hessian(data: &[f64], width: usize, height: usize, sigma: f64) -> Hessian {
    let (smooth, d1, d2) = derivative_taps(sigma);
    let lxx = filter_rows(&filter_cols(data, width, height, &smooth), width, height, &d2);
    let lyy = filter_cols(&filter_rows(data, width, height, &smooth), width, height, &d2);
    let lxy = filter_rows(&filter_cols(data, width, height, &d1), width, height, &d1);
    let norm = sigma.powi(4);
    let det = lxx
        .iter()
        .zip(&lyy)
        .zip(&lxy)
        .map(|((a, b), c)| norm * (a * b - c * c))
        .collect();
    let trace = lxx.iter().zip(&lyy).map(|(a, b)| a + b).collect();
    Hessian { det, trace }
}

/// Scale-normalized determinant of the Hessian of `frame` at scale `sigma`,
/// row-major.
pub fn hessian_det(frame: &Frame, sigma: f64) -> Result<Vec<f64>> {
    validate_scales(&[sigma])?;
    Ok(hessian(frame.pixels(), frame.width(), frame.height(), sigma).det)
}

fn scale_max_raw(data: &[f64], width: usize, height: usize, scales: &[f64], selection: ScaleSelection) -> DetMap {
    let mut map = DetMap {
        width,
        height,
        det: vec![f64::NEG_INFINITY; data.len()],
        best_scale: vec![scales[0]; data.len()],
        bright: vec![false; data.len()],
    };
    let mut alive = vec![true; data.len()];
    for (k, &s) in scales.iter().enumerate() {
        let h = hessian(data, width, height, s);
        for i in 0..data.len() {
            let blob = h.det[i] > 0.0 && h.trace[i] < 0.0;
            if selection == ScaleSelection::Coherent && k > 0 && !(alive[i] && blob) {
                alive[i] = false;
                continue;
            }
            if h.det[i] > map.det[i] {
                map.det[i] = h.det[i];
                map.best_scale[i] = s;
                map.bright[i] = h.trace[i] < 0.0;
            }
            alive[i] &= blob;
        }
    }
    map
}

/// Per-pixel maximum of [`hessian_det`] over `scales`, recording the argmax
/// scale (the smallest one on ties).
pub fn scale_max(frame: &Frame, scales: &[f64]) -> Result<DetMap> {
    validate_scales(scales)?;
    Ok(scale_max_raw(frame.pixels(), frame.width(), frame.height(), scales, ScaleSelection::Max))
}

/// Per-pixel response over `scales` under the given selection rule.
pub fn scale_map(frame: &Frame, scales: &[f64], selection: ScaleSelection) -> Result<DetMap> {
    validate_scales(scales)?;
    Ok(scale_max_raw(frame.pixels(), frame.width(), frame.height(), scales, selection))
}

/// Quantile with linear interpolation between order statistics
/// (`(n - 1) * p` positioning).
pub fn quantile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty set");
    let mut v = values.to_vec();
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let (_, &mut a, rest) = v.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || rest.is_empty() {
        return a;
    }
    let b = rest.iter().copied().fold(f64::INFINITY, f64::min);
    a + frac * (b - a)
}

/// Labeled foreground regions, `0` = background and `1..=count` regions in
/// raster order of their first pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub count: usize,
    pub threshold: f64,
}

impl RegionMap {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in &self.labels {
            if l > 0 {
                sizes[l as usize - 1] += 1;
            }
        }
        sizes
    }
}

fn label_components(
    fg: &[bool],
    width: usize,
    height: usize,
    connectivity: Connectivity,
    min_region_px: usize,
) -> (Vec<u32>, usize) {
    const UNSEEN: u32 = u32::MAX;
    let mut labels = vec![0u32; fg.len()];
    for (l, &f) in labels.iter_mut().zip(fg) {
        if f {
            *l = UNSEEN;
        }
    }
    let offsets: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
    };
    let mut next = 1u32;
    let mut queue = VecDeque::new();
    let mut members = Vec::new();
    for start in 0..fg.len() {
        if labels[start] != UNSEEN {
            continue;
        }
        labels[start] = next;
        queue.push_back(start);
        members.clear();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let (x, y) = ((i % width) as isize, (i / width) as isize);
            for &(dx, dy) in offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if labels[j] == UNSEEN {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
        if members.len() < min_region_px {
            for &i in &members {
                labels[i] = 0;
            }
        } else {
            next += 1;
        }
    }
    (labels, next as usize - 1)
}

fn threshold_mask(map: &DetMap, threshold: f64, mask: Option<&[bool]>) -> Vec<bool> {
    (0..map.det.len())
        .map(|i| {
            map.det[i] > threshold
                && map.det[i] > 0.0
                && map.bright[i]
                && mask.map_or(true, |m| m[i])
        })
        .collect()
}

fn regions_above(map: &DetMap, threshold: f64, min_region_px: usize, connectivity: Connectivity) -> RegionMap {
    let fg = threshold_mask(map, threshold, None);
    let (labels, count) = label_components(&fg, map.width, map.height, connectivity, min_region_px);
    RegionMap {
        width: map.width,
        height: map.height,
        labels,
        count,
        threshold,
    }
}

/// Thresholds `map` at the `percentile` quantile of all its values and labels
/// the connected bright-blob regions, discarding those smaller than
/// `min_region_px`.
pub fn threshold_regions(
    map: &DetMap,
    percentile: f64,
    min_region_px: usize,
    connectivity: Connectivity,
) -> RegionMap {
    regions_above(map, quantile(&map.det, percentile), min_region_px, connectivity)
}

/// Like [`threshold_regions`], but the quantile is taken over the bright-blob
/// pixels only (positive determinant, negative trace). Used with
/// [`ScaleSelection::Coherent`], whose map is mostly non-positive.
pub fn threshold_blob_regions(
    map: &DetMap,
    percentile: f64,
    min_region_px: usize,
    connectivity: Connectivity,
) -> RegionMap {
    let support: Vec<f64> = (0..map.det.len())
        .filter(|&i| map.det[i] > 0.0 && map.bright[i])
        .map(|i| map.det[i])
        .collect();
    let threshold = if support.is_empty() { 0.0 } else { quantile(&support, percentile) };
    regions_above(map, threshold, min_region_px, connectivity)
}

/// One center per region: the centroid of member pixels (determinant-weighted
/// or plain) and the mean frame intensity over the members.
pub fn extract_centers(regions: &RegionMap, map: &DetMap, frame: &Frame, mode: CentroidMode) -> Vec<AtomCenter> {
    #[derive(Default, Clone, Copy)]
    struct Acc {
        w: f64,
        wx: f64,
        wy: f64,
        intensity: f64,
        n: usize,
    }
    let mut acc = vec![Acc::default(); regions.count];
    for (i, &l) in regions.labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let a = &mut acc[l as usize - 1];
        let w = match mode {
            CentroidMode::Weighted => map.det[i],
            CentroidMode::Plain => 1.0,
        };
        let (x, y) = ((i % regions.width) as f64, (i / regions.width) as f64);
        a.w += w;
        a.wx += w * x;
        a.wy += w * y;
        a.intensity += frame.pixels()[i];
        a.n += 1;
    }
    acc.into_iter()
        .filter(|a| a.n > 0)
        .map(|a| AtomCenter {
            frame_index: frame.index(),
            x: a.wx / a.w,
            y: a.wy / a.w,
            intensity: a.intensity / a.n as f64,
            region_px: a.n,
        })
        .collect()
}

fn median(values: &mut [usize]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

/// Second pass over one region: the determinant map is recomputed on the
/// region's bounding box of `source` and thresholded at the percentile of the
/// determinants inside the region. When that yields several sub-centers they
/// are refined by a joint Gaussian fit. Returns the sub-centers in frame
/// coordinates.
fn split_region(
    source: &Frame,
    intensity_frame: &Frame,
    parent: &DetMap,
    regions: &RegionMap,
    label: u32,
    params: &DetectionParams,
) -> Vec<AtomCenter> {
    let w = regions.width;
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for (i, &l) in regions.labels.iter().enumerate() {
        if l == label {
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
    }
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut crop = Vec::with_capacity(bw * bh);
    let mut mask = Vec::with_capacity(bw * bh);
    for y in y0..=y1 {
        for x in x0..=x1 {
            crop.push(source.get(x, y));
            mask.push(regions.labels[y * w + x] == label);
        }
    }
    let map = scale_max_raw(&crop, bw, bh, &params.scales, params.scale_selection);
    let inside: Vec<f64> = map.det.iter().zip(&mask).filter(|(_, &m)| m).map(|(d, _)| *d).collect();
    let threshold = quantile(&inside, params.percentile);
    let fg = threshold_mask(&map, threshold, Some(&mask));
    let (labels, count) = label_components(&fg, bw, bh, params.connectivity, params.min_region_px);
    let sub = RegionMap {
        width: bw,
        height: bh,
        labels,
        count,
        threshold,
    };
    let intensity_crop = Frame::from_fn(bw, bh, source.index(), |x, y| intensity_frame.get(x0 + x, y0 + y))
        .expect("crop has positive size");
    let mut subs = extract_centers(&sub, &map, &intensity_crop, params.centroid);
    if subs.len() >= 2 {
        let sigma0 = subs
            .iter()
            .map(|c| {
                let (x, y) = ((c.x.round() as usize).min(bw - 1) + x0, (c.y.round() as usize).min(bh - 1) + y0);
                parent.best_scale[y * parent.width + x]
            })
            .sum::<f64>()
            / subs.len() as f64;
        let init: Vec<(f64, f64)> = subs.iter().map(|c| (c.x + x0 as f64, c.y + y0 as f64)).collect();
        let window = Window { x0, y0, x1, y1 }.grow(sigma0.ceil() as usize, source.width(), source.height());
        if let Some(fit) = fit_gaussians(source, window, &init, sigma0) {
            for (c, (x, y)) in subs.iter_mut().zip(fit) {
                c.x = x - x0 as f64;
                c.y = y - y0 as f64;
            }
        }
    }
    subs.into_iter()
        .map(|mut c| {
            c.x += x0 as f64;
            c.y += y0 as f64;
            c
        })
        .collect()
}

/// Detects atom centers in one frame: optional blur, [`scale_max`],
/// [`threshold_regions`], [`extract_centers`], then the optional nested pass
/// that splits oversized regions holding several blobs.
pub fn detect_atoms(frame: &Frame, params: &DetectionParams) -> Result<Vec<AtomCenter>> {
    params.validate()?;
    let denoised = match &params.blur {
        Some(b) => gaussian_blur(frame, b)?,
        None => frame.clone(),
    };
    let map = scale_max_raw(
        denoised.pixels(),
        denoised.width(),
        denoised.height(),
        &params.scales,
        params.scale_selection,
    );
    let regions = match params.scale_selection {
        ScaleSelection::Max => threshold_regions(&map, params.percentile, params.min_region_px, params.connectivity),
        ScaleSelection::Coherent => {
            threshold_blob_regions(&map, params.percentile, params.min_region_px, params.connectivity)
        }
    };
    let centers = extract_centers(&regions, &map, &denoised, params.centroid);
    if !params.nested_pass || centers.is_empty() {
        return Ok(centers);
    }

    let sizes = regions.sizes();
    let mut out = Vec::with_capacity(centers.len());
    for (k, center) in centers.into_iter().enumerate() {
        let mut others: Vec<usize> = sizes
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, &s)| s)
            .collect();
        let candidate = others.is_empty() || sizes[k] as f64 > params.nested_size_factor * median(&mut others);
        if candidate {
            let subs = split_region(frame, &denoised, &map, &regions, k as u32 + 1, params);
            if subs.len() >= 2 {
                out.extend(subs);
                continue;
            }
        }
        out.push(center);
    }
    Ok(out)
}

/// Runs [`detect_atoms`] on every frame of `stack` in parallel.
pub fn detect_stack(stack: &ImageStack, params: &DetectionParams) -> Result<Vec<Vec<AtomCenter>>> {
    params.validate()?;
    stack.frames().par_iter().map(|f| detect_atoms(f, params)).collect()
}
