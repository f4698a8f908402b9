//! Static renderings: center overlays, an all-frame scatter colored by frame,
//! trajectory maps with ID labels, species maps and distance histograms.

use std::path::Path;

use atomtrack_core::neighbor::DistanceHistogram;
use atomtrack_core::{AtomCenter, Frame, LabeledTrack, SpeciesLabel};
use image::{Rgb, RgbImage};

use crate::font;
use crate::Failure;

pub const SE_COLOR: Rgb<u8> = Rgb([255, 215, 0]);
pub const MO_COLOR: Rgb<u8> = Rgb([148, 0, 211]);
pub const UNKNOWN_COLOR: Rgb<u8> = Rgb([255, 0, 0]);
pub const CENTER_COLOR: Rgb<u8> = Rgb([255, 64, 0]);
pub const LABEL_COLOR: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS_COLOR: Rgb<u8> = Rgb([160, 160, 160]);
const BAR_COLOR: Rgb<u8> = Rgb([70, 110, 200]);

#[derive(Debug, Clone, PartialEq)]
pub struct RenderStyle {
    /// Marker radius in pixels for a center of intensity 0.5.
    pub marker_radius: f64,
    /// Grow species markers with the atom's mean intensity.
    pub scale_by_intensity: bool,
    /// Pixel size of one font cell for ID labels.
    pub label_scale: u32,
    /// Border around track plots, holding the axes.
    pub pad: u32,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self { marker_radius: 3.0, scale_by_intensity: true, label_scale: 2, pad: 24 }
    }
}

impl RenderStyle {
    fn species_radius(&self, intensity: f64) -> f64 {
        if self.scale_by_intensity {
            (self.marker_radius * (0.5 + intensity.clamp(0.0, 1.0))).max(1.5)
        } else {
            self.marker_radius
        }
    }
}

const VIRIDIS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

/// Color of frame `t` out of `n` on a dark-to-bright ramp.
pub fn frame_color(t: usize, n: usize) -> Rgb<u8> {
    let u = if n > 1 { t.min(n - 1) as f64 / (n - 1) as f64 } else { 0.0 };
    let pos = u * (VIRIDIS.len() - 1) as f64;
    let k = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - k as f64;
    let c = |i: usize| (VIRIDIS[k][i] + f * (VIRIDIS[k + 1][i] - VIRIDIS[k][i])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

pub fn grayscale(frame: &Frame) -> RgbImage {
    RgbImage::from_fn(frame.width() as u32, frame.height() as u32, |x, y| {
        let v = (frame.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([v, v, v])
    })
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn fill_rect(img: &mut RgbImage, x0: i64, y0: i64, w: i64, h: i64, c: Rgb<u8>) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            put(img, x, y, c);
        }
    }
}

fn disc(img: &mut RgbImage, (cx, cy): (f64, f64), r: f64, c: Rgb<u8>) {
    let ri = r.ceil() as i64;
    let (x0, y0) = (cx.round() as i64, cy.round() as i64);
    for y in y0 - ri..=y0 + ri {
        for x in x0 - ri..=x0 + ri {
            if ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) <= r * r {
                put(img, x, y, c);
            }
        }
    }
}

fn triangle(img: &mut RgbImage, (cx, cy): (f64, f64), r: f64, c: Rgb<u8>) {
    // pointing up, vertices on the circle of radius r
    let v = [
        (cx, cy - r),
        (cx - r * 0.866, cy + r * 0.5),
        (cx + r * 0.866, cy + r * 0.5),
    ];
    let edge = |a: (f64, f64), b: (f64, f64), p: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    let ri = r.ceil() as i64;
    let (x0, y0) = (cx.round() as i64, cy.round() as i64);
    for y in y0 - ri..=y0 + ri {
        for x in x0 - ri..=x0 + ri {
            let p = (x as f64, y as f64);
            let (e0, e1, e2) = (edge(v[0], v[1], p), edge(v[1], v[2], p), edge(v[2], v[0], p));
            if (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0) {
                put(img, x, y, c);
            }
        }
    }
}

fn cross(img: &mut RgbImage, (cx, cy): (f64, f64), r: f64, c: Rgb<u8>) {
    let (x, y, r) = (cx.round() as i64, cy.round() as i64, r.round().max(1.0) as i64);
    line(img, (x - r, y - r), (x + r, y + r), c);
    line(img, (x - r, y + r), (x + r, y - r), c);
}

fn species_marker(img: &mut RgbImage, p: (f64, f64), label: SpeciesLabel, intensity: f64, style: &RenderStyle) {
    let r = style.species_radius(intensity);
    match label {
        SpeciesLabel::Se => disc(img, p, r, SE_COLOR),
        SpeciesLabel::Mo => triangle(img, p, r * 1.2, MO_COLOR),
        SpeciesLabel::Unknown => cross(img, p, r, UNKNOWN_COLOR),
    }
}

/// The frame in grayscale with a marker on every center; species glyphs
/// (Se disc, Mo triangle, Unknown cross) when `labels` is given, one per
/// center in order.
pub fn render_overlay(
    frame: &Frame,
    centers: &[AtomCenter],
    labels: Option<&[SpeciesLabel]>,
    style: &RenderStyle,
) -> RgbImage {
    let mut img = grayscale(frame);
    for (k, c) in centers.iter().enumerate() {
        match labels.and_then(|l| l.get(k)) {
            Some(&label) => species_marker(&mut img, (c.x, c.y), label, c.intensity, style),
            None => disc(&mut img, (c.x, c.y), style.marker_radius * 0.67, CENTER_COLOR),
        }
    }
    img
}

/// Every center of every frame as a dot colored by its frame index, on a
/// black canvas of the frame size.
pub fn render_scatter(stack_centers: &[Vec<AtomCenter>], width: usize, height: usize) -> RgbImage {
    let mut img = RgbImage::new(width as u32, height as u32);
    let n = stack_centers.len();
    for (t, frame) in stack_centers.iter().enumerate() {
        for c in frame {
            put(&mut img, c.x.round() as i64, c.y.round() as i64, frame_color(t, n));
        }
    }
    img
}

fn axes(img: &mut RgbImage, pad: u32, width: usize, height: usize) {
    let (p, w, h) = (pad as i64, width as i64, height as i64);
    line(img, (p - 1, p - 1), (p - 1, p + h), AXIS_COLOR);
    line(img, (p - 1, p + h), (p + w, p + h), AXIS_COLOR);
    for x in (0..=w).step_by(50) {
        line(img, (p + x, p + h), (p + x, p + h + 4), AXIS_COLOR);
    }
    for y in (0..=h).step_by(50) {
        line(img, (p - 5, p + y), (p - 1, p + y), AXIS_COLOR);
    }
}

/// A text label stamped on a plot: digits drawn at `(x, y)` (top-left).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextLabel {
    pub x: u32,
    pub y: u32,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct TrackPlot {
    pub image: RgbImage,
    pub labels: Vec<TextLabel>,
    pub label_scale: u32,
}

impl TrackPlot {
    /// Re-reads every stamped label from the pixels.
    pub fn read_labels(&self) -> Vec<Option<String>> {
        self.labels
            .iter()
            .map(|l| font::read_text(&self.image, l.x, l.y, l.text.len(), self.label_scale, LABEL_COLOR))
            .collect()
    }
}

/// Stamps `text` to the right of `anchor`, above it or below it.
fn stamp(img: &mut RgbImage, anchor: (f64, f64), above: bool, text: &str, scale: u32) -> TextLabel {
    let (tw, th) = font::text_size(text.len(), scale);
    let x = (anchor.0.round() as i64 + 4).clamp(1, (img.width() as i64 - tw as i64 - 1).max(1));
    let y = if above { anchor.1.round() as i64 - 4 - th as i64 } else { anchor.1.round() as i64 + 4 };
    let y = y.clamp(1, (img.height() as i64 - th as i64 - 1).max(1));
    fill_rect(img, x - 1, y - 1, tw as i64 + 2, th as i64 + 2, Rgb([0, 0, 0]));
    font::draw_text(img, x, y, text, scale, LABEL_COLOR);
    TextLabel { x: x as u32, y: y as u32, text: text.to_string() }
}

/// Trajectories through frame `upto` (all frames when `None`), each
/// segment colored by its frame, with the atom ID above the first and below
/// the last drawn position. The canvas is the frame size plus `style.pad` on every
/// side.
pub fn render_tracks(
    tracks: &[LabeledTrack],
    width: usize,
    height: usize,
    upto: Option<usize>,
    style: &RenderStyle,
) -> TrackPlot {
    let pad = style.pad;
    let mut img = RgbImage::new(width as u32 + 2 * pad, height as u32 + 2 * pad);
    axes(&mut img, pad, width, height);
    let off = |(x, y): (f64, f64)| (x + pad as f64, y + pad as f64);
    let n = tracks.iter().map(|t| t.track.len()).max().unwrap_or(0);
    for t in tracks {
        let pos = &t.track.positions;
        let last = upto.map_or(pos.len(), |u| (u + 1).min(pos.len()));
        if last == 0 {
            continue;
        }
        disc(&mut img, off(pos[0]), 1.0, frame_color(0, n));
        for k in 1..last {
            let (a, b) = (off(pos[k - 1]), off(pos[k]));
            line(
                &mut img,
                (a.0.round() as i64, a.1.round() as i64),
                (b.0.round() as i64, b.1.round() as i64),
                frame_color(k, n),
            );
        }
    }
    // labels last so that no trajectory covers them
    let mut labels = Vec::new();
    for t in tracks {
        let pos = &t.track.positions;
        let last = upto.map_or(pos.len(), |u| (u + 1).min(pos.len()));
        if last == 0 {
            continue;
        }
        let id = t.track.atom_id.to_string();
        labels.push(stamp(&mut img, off(pos[0]), true, &id, style.label_scale));
        labels.push(stamp(&mut img, off(pos[last - 1]), false, &id, style.label_scale));
    }
    TrackPlot { image: img, labels, label_scale: style.label_scale }
}

/// `frame` with every track's position at frame `t`, drawn with its final
/// species glyph sized by the track's mean intensity.
pub fn render_species(frame: &Frame, tracks: &[LabeledTrack], t: usize, style: &RenderStyle) -> RgbImage {
    let mut img = grayscale(frame);
    for tr in tracks {
        let Some(&p) = tr.track.positions.get(t) else {
            continue;
        };
        let n = tr.track.intensities.len().max(1) as f64;
        let mean = tr.track.intensities.iter().sum::<f64>() / n;
        species_marker(&mut img, p, tr.final_label, mean, style);
    }
    img
}

pub const HIST_W: u32 = 640;
pub const HIST_H: u32 = 400;
pub const HIST_PAD: u32 = 30;

/// Bar chart of `hist`; the fullest bin spans the whole plot height.
pub fn render_histogram(hist: &DistanceHistogram) -> RgbImage {
    let mut img = RgbImage::from_pixel(HIST_W, HIST_H, Rgb([255, 255, 255]));
    let (pw, ph) = (HIST_W - 2 * HIST_PAD, HIST_H - 2 * HIST_PAD);
    let max = hist.counts.iter().copied().max().unwrap_or(0);
    let n = hist.counts.len() as u32;
    if max > 0 {
        for (k, &count) in hist.counts.iter().enumerate() {
            let x0 = HIST_PAD + k as u32 * pw / n;
            let x1 = (HIST_PAD + (k as u32 + 1) * pw / n).max(x0 + 1);
            let h = (count as f64 / max as f64 * ph as f64).round() as i64;
            fill_rect(
                &mut img,
                x0 as i64,
                (HIST_PAD + ph) as i64 - h,
                (x1 - x0) as i64,
                h,
                BAR_COLOR,
            );
        }
    }
    let (p, w, h) = (HIST_PAD as i64, pw as i64, ph as i64);
    line(&mut img, (p - 1, p), (p - 1, p + h), Rgb([0, 0, 0]));
    line(&mut img, (p - 1, p + h), (p + w, p + h), Rgb([0, 0, 0]));
    img
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<(), Failure> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Failure::data(anyhow::anyhow!("cannot write {}: {e}", path.display())))
}
