//! Joint Gaussian fit for a handful of overlapping blobs.
//!
//! Centroids of blobs that overlap are pulled toward each other; fitting
//! `b + sum_k A_k exp(-|p - c_k|^2 / 2 s^2)` over the shared window removes
//! that bias. Used by the nested pass once a region has been split.

use nalgebra::{DMatrix, DVector};

use crate::stack_io::Frame;

/// Pixel window `[x0, x1] x [y0, y1]`, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Window {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Window {
    pub fn grow(self, by: usize, width: usize, height: usize) -> Self {
        Self {
            x0: self.x0.saturating_sub(by),
            y0: self.y0.saturating_sub(by),
            x1: (self.x1 + by).min(width - 1),
            y1: (self.y1 + by).min(height - 1),
        }
    }
}

// parameter layout: [b, s, A_0, x_0, y_0, A_1, x_1, y_1, ...]
fn residuals_and_jacobian(p: &DVector<f64>, pts: &[(f64, f64, f64)], jac: Option<&mut DMatrix<f64>>) -> DVector<f64> {
    let k = (p.len() - 2) / 3;
    let (b, s) = (p[0], p[1]);
    let s2 = s * s;
    let mut r = DVector::zeros(pts.len());
    let mut jac = jac;
    for (i, &(x, y, v)) in pts.iter().enumerate() {
        let mut model = b;
        let mut ds = 0.0;
        for j in 0..k {
            let (a, cx, cy) = (p[2 + 3 * j], p[3 + 3 * j], p[4 + 3 * j]);
            let (dx, dy) = (x - cx, y - cy);
            let q = dx * dx + dy * dy;
            let e = (-q / (2.0 * s2)).exp();
            model += a * e;
            ds += a * e * q / (s2 * s);
            if let Some(jm) = jac.as_deref_mut() {
                jm[(i, 2 + 3 * j)] = e;
                jm[(i, 3 + 3 * j)] = a * e * dx / s2;
                jm[(i, 4 + 3 * j)] = a * e * dy / s2;
            }
        }
        if let Some(jm) = jac.as_deref_mut() {
            jm[(i, 0)] = 1.0;
            jm[(i, 1)] = ds;
        }
        r[i] = model - v;
    }
    r
}

/// Refines `init` centers by a Levenberg-Marquardt fit over `window` of
/// `frame`. Returns `None` when the fit fails or wanders off: a center moving
/// more than `sigma0`, a non-positive amplitude, or a width far from
/// `sigma0`.
pub(crate) fn fit_gaussians(frame: &Frame, window: Window, init: &[(f64, f64)], sigma0: f64) -> Option<Vec<(f64, f64)>> {
    let mut pts = Vec::new();
    for y in window.y0..=window.y1 {
        for x in window.x0..=window.x1 {
            pts.push((x as f64, y as f64, frame.get(x, y)));
        }
    }
    let n = 2 + 3 * init.len();
    if pts.len() <= n {
        return None;
    }
    let b0 = pts.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let mut p = DVector::zeros(n);
    p[0] = b0;
    p[1] = sigma0;
    for (j, &(cx, cy)) in init.iter().enumerate() {
        let (ix, iy) = (cx.round() as usize, cy.round() as usize);
        p[2 + 3 * j] = (frame.get(ix.min(frame.width() - 1), iy.min(frame.height() - 1)) - b0).max(1e-6);
        p[3 + 3 * j] = cx;
        p[4 + 3 * j] = cy;
    }

    let mut jac = DMatrix::zeros(pts.len(), n);
    let mut r = residuals_and_jacobian(&p, &pts, Some(&mut jac));
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..100 {
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * &r;
        let mut a = jtj.clone();
        for d in 0..n {
            a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
        }
        let Some(step) = a.lu().solve(&(-&g)) else {
            lambda *= 10.0;
            continue;
        };
        let trial = &p + &step;
        if !(trial[1] > 0.0) {
            lambda *= 10.0;
            continue;
        }
        let tr = residuals_and_jacobian(&trial, &pts, None);
        let tcost = tr.norm_squared();
        if tcost < cost {
            let done = (cost - tcost) <= 1e-12 * cost.max(1e-300);
            p = trial;
            cost = tcost;
            r = residuals_and_jacobian(&p, &pts, Some(&mut jac));
            lambda = (lambda / 3.0).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    let s = p[1];
    if !(s > 0.3 * sigma0 && s < 3.0 * sigma0) {
        return None;
    }
    let mut out = Vec::with_capacity(init.len());
    for (j, &(cx, cy)) in init.iter().enumerate() {
        let (a, x, y) = (p[2 + 3 * j], p[3 + 3 * j], p[4 + 3 * j]);
        if !(a > 0.0) || !x.is_finite() || !y.is_finite() || (x - cx).hypot(y - cy) > sigma0 {
            return None;
        }
        out.push((x, y));
    }
    Some(out)
}
