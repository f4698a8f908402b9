//! Frame stacks on disk and the CSV formats of every pipeline output.
//!
//! Two stack layouts are understood:
//!
//! * a directory of grayscale PNG or PGM files (8 or 16 bit), one per frame,
//!   ordered by lexicographic file name (zero-pad your indices);
//! * a raw stack: little-endian `f32` payload, row-major within a frame and
//!   frame-major overall, next to a `<payload>.meta` text file holding
//!   `key=value` lines with the required keys `width`, `height` and `frames`.
//!
//! Loaded stacks are min-max normalized over the whole stack, so intensity
//! ratios between frames survive.
//!
//! CSV layouts:
//!
//! * centers: `frame,x,y,intensity,region_px`
//! * tracks: `atom_id,frame,x,y,intensity,frame_label` plus the companion
//!   summary `atom_id,final_label,votes_mo,votes_se,votes_unknown` stored
//!   next to it (see [`summary_path`]).
//!
//! Floats are written in shortest round-trip form, so `load(save(x)) == x`
//! bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::blob_detect::AtomCenter;
use crate::neighbor::DistanceHistogram;
use crate::error::{Error, Result};
use crate::species::{LabeledTrack, SpeciesLabel};
use crate::tracker::Track;

/// One grayscale frame. `x` is the column, `y` the row.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    index: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, index: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(format!(
                "frame {index}: dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "frame {index}: {} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            index,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, index: usize, value: f64) -> Result<Self> {
        Self::new(width, height, index, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        index: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, index, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Copy of this frame with its pixels replaced.
    pub fn with_pixels(&self, pixels: Vec<f64>) -> Result<Self> {
        Self::new(self.width, self.height, self.index, pixels)
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    /// Whether every pixel is finite and inside `[0, 1]`.
    pub fn is_normalized(&self) -> bool {
        self.pixels.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Ordered frames sharing one geometry, indexed `0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    frames: Vec<Frame>,
}

impl ImageStack {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::InvalidFrame("stack has no frames".into()));
        };
        let (w, h) = (first.width, first.height);
        for (i, f) in frames.iter().enumerate() {
            if f.width != w || f.height != h {
                return Err(Error::InvalidFrame(format!(
                    "frame {i} is {}x{}, stack is {w}x{h}",
                    f.width, f.height
                )));
            }
            if f.index != i {
                return Err(Error::InvalidFrame(format!(
                    "frame at position {i} carries index {}",
                    f.index
                )));
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    /// Applies `f` to every pixel of every frame.
    pub fn map_pixels(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let frames = self
            .frames
            .iter()
            .map(|fr| fr.with_pixels(fr.pixels.iter().map(|&v| f(v)).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(frames)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackFormat {
    FrameDirectory,
    RawStack,
}

impl std::str::FromStr for StackFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame_directory" | "frames" | "dir" => Ok(StackFormat::FrameDirectory),
            "raw_stack" | "raw" => Ok(StackFormat::RawStack),
            other => Err(Error::InvalidParam(format!(
                "unknown stack format `{other}` (expected frame_directory or raw_stack)"
            ))),
        }
    }
}

/// Loads a stack and normalizes it with [`normalize_stack`].
pub fn load_stack(path: &Path, format: StackFormat) -> Result<ImageStack> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let raw = match format {
        StackFormat::FrameDirectory => load_frame_directory(path)?,
        StackFormat::RawStack => load_raw_stack(path)?,
    };
    normalize_stack(&raw)
}

fn is_frame_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"))
        .unwrap_or(false)
}

fn load_frame_directory(dir: &Path) -> Result<ImageStack> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.is_file() && is_frame_file(&p) {
            files.push(p);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if files.is_empty() {
        return Err(Error::EmptyStack(dir.to_path_buf()));
    }

    let mut frames = Vec::with_capacity(files.len());
    let mut dims = None;
    for (i, file) in files.iter().enumerate() {
        let img = image::open(file).map_err(|source| Error::Image {
            path: file.clone(),
            source,
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (sw, sh) = *dims.get_or_insert((w, h));
        if (w, h) != (sw, sh) {
            return Err(Error::DimensionMismatch {
                path: file.clone(),
                width: sw,
                height: sh,
                found_width: w,
                found_height: h,
            });
        }
        let pixels: Vec<f64> = match img {
            DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
            DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
            DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
                img.to_luma16().into_raw().into_iter().map(f64::from).collect()
            }
            _ => return Err(Error::format(file, "not a grayscale image")),
        };
        frames.push(Frame::new(w, h, i, pixels)?);
    }
    ImageStack::new(frames)
}

/// Sidecar metadata path for a raw payload: `<payload>.meta`.
pub fn raw_meta_path(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

struct RawMeta {
    width: usize,
    height: usize,
    frames: usize,
}

fn parse_raw_meta(path: &Path) -> Result<RawMeta> {
    if !path.exists() {
        return Err(Error::format(path, "raw stack metadata file is missing"));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut keys = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line: n as u64 + 1,
                message: format!("expected key=value, got `{line}`"),
            });
        };
        keys.insert(k.trim().to_string(), (n as u64 + 1, v.trim().to_string()));
    }
    let get = |key: &str| -> Result<usize> {
        let (line, v) = keys
            .get(key)
            .ok_or_else(|| Error::format(path, format!("missing required key `{key}`")))?;
        match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line: *line,
                message: format!("`{key}` must be a positive integer, got `{v}`"),
            }),
        }
    };
    Ok(RawMeta {
        width: get("width")?,
        height: get("height")?,
        frames: get("frames")?,
    })
}

fn load_raw_stack(path: &Path) -> Result<ImageStack> {
    let meta = parse_raw_meta(&raw_meta_path(path))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let frame_len = meta.width * meta.height;
    let expected = (frame_len * meta.frames * 4) as u64;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::ShortPayload {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(Error::format(
            path,
            format!("payload is {actual} bytes, metadata declares {expected} ({} trailing)", actual - expected),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    let frames = values
        .chunks_exact(frame_len)
        .enumerate()
        .map(|(i, px)| Frame::new(meta.width, meta.height, i, px.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    ImageStack::new(frames)
}

/// Writes `stack` as a raw `f32` payload at `path` plus its `.meta` sidecar.
pub fn save_raw_stack(stack: &ImageStack, path: &Path) -> Result<()> {
    let mut payload = Vec::with_capacity(stack.len() * stack.width() * stack.height() * 4);
    for f in stack.frames() {
        for &v in f.pixels() {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, payload).map_err(|e| Error::io(path, e))?;
    let meta = raw_meta_path(path);
    let text = format!(
        "width={}\nheight={}\nframes={}\ndtype=f32le\n",
        stack.width(),
        stack.height(),
        stack.len()
    );
    fs::write(&meta, text).map_err(|e| Error::io(&meta, e))
}

/// Writes one 16-bit grayscale PNG per frame (`frame_0000.png`, ...).
/// Values are clamped to `[0, 1]` and quantized to 16 bits.
pub fn save_frame_directory(stack: &ImageStack, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in stack.frames() {
        let data: Vec<u16> = f
            .pixels()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(
            f.width() as u32,
            f.height() as u32,
            data,
        )
        .expect("buffer length matches frame dimensions");
        let path = dir.join(format!("frame_{:04}.png", f.index()));
        buf.save(&path).map_err(|source| Error::Image { path, source })?;
    }
    Ok(())
}

/// Affine map of the stack onto `[0, 1]` using the global min and max over all
/// frames. A constant stack maps to zeros.
pub fn normalize_stack(stack: &ImageStack) -> Result<ImageStack> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for f in stack.frames() {
        for (i, &v) in f.pixels().iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    frame: f.index(),
                    x: i % f.width(),
                    y: i / f.width(),
                    value: v,
                });
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let range = hi - lo;
    if range > 0.0 {
        // clamp guards the last ulp; (v - lo) / range is already in [0, 1]
        stack.map_pixels(|v| ((v - lo) / range).clamp(0.0, 1.0))
    } else {
        stack.map_pixels(|_| 0.0)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CenterRow {
    frame: usize,
    x: f64,
    y: f64,
    intensity: f64,
    region_px: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    atom_id: usize,
    frame: usize,
    x: f64,
    y: f64,
    intensity: f64,
    frame_label: SpeciesLabel,
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryRow {
    atom_id: usize,
    final_label: SpeciesLabel,
    votes_mo: usize,
    votes_se: usize,
    votes_unknown: usize,
}

pub(crate) const CENTER_HEADER: &[&str] = &["frame", "x", "y", "intensity", "region_px"];
pub(crate) const TRACK_HEADER: &[&str] = &["atom_id", "frame", "x", "y", "intensity", "frame_label"];
const SUMMARY_HEADER: &[&str] = &["atom_id", "final_label", "votes_mo", "votes_se", "votes_unknown"];

/// Companion summary path of a tracks CSV: `tracks.csv` -> `tracks_summary.csv`.
pub fn summary_path(tracks: &Path) -> PathBuf {
    let stem = tracks
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = tracks
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    tracks.with_file_name(format!("{stem}_summary.{ext}"))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

pub(crate) fn write_header<W: Write>(w: &mut csv::Writer<W>, header: &[&str], path: &Path) -> Result<()> {
    w.write_record(header).map_err(|e| csv_error(path, e))
}

pub(crate) fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        kind => Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message: csv_kind_message(kind),
        },
    }
}

fn csv_kind_message(kind: csv::ErrorKind) -> String {
    match kind {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("expected {expected_len} fields, found {len}"),
        other => format!("{other:?}"),
    }
}

/// Reads every row of a CSV file whose header must equal `header`.
pub(crate) fn read_rows<T: serde::de::DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let found = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        });
    }
    rdr.deserialize().map(|r| r.map_err(|e| csv_error(path, e))).collect()
}

pub fn save_centers(centers: &[AtomCenter], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_header(&mut w, CENTER_HEADER, path)?;
    for c in centers {
        w.serialize(CenterRow {
            frame: c.frame_index,
            x: c.x,
            y: c.y,
            intensity: c.intensity,
            region_px: c.region_px,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_centers(path: &Path) -> Result<Vec<AtomCenter>> {
    let rows: Vec<CenterRow> = read_rows(path, CENTER_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|r| AtomCenter {
            frame_index: r.frame,
            x: r.x,
            y: r.y,
            intensity: r.intensity,
            region_px: r.region_px,
        })
        .collect())
}

/// Groups a flat center list into per-frame lists, `n_frames` long (or long
/// enough to hold the largest frame index when `n_frames` is `None`).
pub fn centers_by_frame(centers: &[AtomCenter], n_frames: Option<usize>) -> Vec<Vec<AtomCenter>> {
    let n = n_frames.unwrap_or_else(|| centers.iter().map(|c| c.frame_index + 1).max().unwrap_or(0));
    let mut out = vec![Vec::new(); n];
    for c in centers {
        if c.frame_index < n {
            out[c.frame_index].push(c.clone());
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct HistogramRow {
    bin_lo: f64,
    bin_hi: f64,
    count: usize,
}

const HISTOGRAM_HEADER: &[&str] = &["bin_lo", "bin_hi", "count"];

/// Writes a histogram as `bin_lo,bin_hi,count`, one row per bin.
pub fn save_histogram(hist: &DistanceHistogram, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_header(&mut w, HISTOGRAM_HEADER, path)?;
    for (k, &count) in hist.counts.iter().enumerate() {
        let (bin_lo, bin_hi) = hist.bin_range(k);
        w.serialize(HistogramRow { bin_lo, bin_hi, count })
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a histogram written by [`save_histogram`]. An empty file gives an
/// empty histogram of width 1.
pub fn load_histogram(path: &Path) -> Result<DistanceHistogram> {
    let rows: Vec<HistogramRow> = read_rows(path, HISTOGRAM_HEADER)?;
    let bin_width = rows.first().map_or(1.0, |r| r.bin_hi - r.bin_lo);
    if !(bin_width > 0.0) {
        return Err(Error::format(path, "histogram bins must have positive width"));
    }
    Ok(DistanceHistogram { bin_width, counts: rows.iter().map(|r| r.count).collect() })
}

/// Writes the tracks CSV and its companion summary.
pub fn save_tracks(tracks: &[LabeledTrack], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_header(&mut w, TRACK_HEADER, path)?;
    for t in tracks {
        for (frame, ((&(x, y), &intensity), &label)) in t
            .track
            .positions
            .iter()
            .zip(&t.track.intensities)
            .zip(&t.frame_labels)
            .enumerate()
        {
            w.serialize(TrackRow {
                atom_id: t.track.atom_id,
                frame,
                x,
                y,
                intensity,
                frame_label: label,
            })
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let spath = summary_path(path);
    let mut w = csv_writer(&spath)?;
    write_header(&mut w, SUMMARY_HEADER, &spath)?;
    for t in tracks {
        let [mo, se, unknown] = t.label_counts();
        w.serialize(SummaryRow {
            atom_id: t.track.atom_id,
            final_label: t.final_label,
            votes_mo: mo,
            votes_se: se,
            votes_unknown: unknown,
        })
        .map_err(|e| csv_error(&spath, e))?;
    }
    w.flush().map_err(|e| Error::io(&spath, e))
}

/// Reads a tracks CSV and its companion summary.
pub fn load_tracks(path: &Path) -> Result<Vec<LabeledTrack>> {
    let rows: Vec<TrackRow> = read_rows(path, TRACK_HEADER)?;
    let spath = summary_path(path);
    let summary: Vec<SummaryRow> = read_rows(&spath, SUMMARY_HEADER)?;

    // atom_id -> (first data line, rows); order of first appearance kept
    let mut order: Vec<usize> = Vec::new();
    let mut grouped: BTreeMap<usize, (u64, Vec<&TrackRow>)> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let entry = grouped.entry(r.atom_id).or_insert_with(|| {
            order.push(r.atom_id);
            (i as u64 + 2, Vec::new())
        });
        entry.1.push(r);
    }

    let mut tracks = Vec::with_capacity(order.len());
    let mut n_frames = None;
    for id in &order {
        let (line, group) = &grouped[id];
        for (t, r) in group.iter().enumerate() {
            if r.frame != t {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: *line + t as u64,
                    message: format!("atom {id}: expected frame {t}, found {}", r.frame),
                });
            }
        }
        let n = *n_frames.get_or_insert(group.len());
        if group.len() != n {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line: *line,
                message: format!("atom {id} has {} frames, other tracks have {n}", group.len()),
            });
        }
        tracks.push(LabeledTrack {
            track: Track {
                atom_id: *id,
                positions: group.iter().map(|r| (r.x, r.y)).collect(),
                intensities: group.iter().map(|r| r.intensity).collect(),
            },
            frame_labels: group.iter().map(|r| r.frame_label).collect(),
            final_label: SpeciesLabel::Unknown,
        });
    }

    if summary.len() != tracks.len() {
        return Err(Error::format(
            &spath,
            format!("{} summary rows for {} tracks", summary.len(), tracks.len()),
        ));
    }
    for (i, (s, t)) in summary.iter().zip(tracks.iter_mut()).enumerate() {
        let line = i as u64 + 2;
        if s.atom_id != t.track.atom_id {
            return Err(Error::MalformedRow {
                path: spath.clone(),
                line,
                message: format!("expected atom {}, found {}", t.track.atom_id, s.atom_id),
            });
        }
        if [s.votes_mo, s.votes_se, s.votes_unknown] != t.label_counts() {
            return Err(Error::MalformedRow {
                path: spath.clone(),
                line,
                message: format!("label counts disagree with the per-frame labels of atom {}", s.atom_id),
            });
        }
        t.final_label = s.final_label;
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn center(frame: usize, x: f64, y: f64, intensity: f64, region_px: usize) -> AtomCenter {
        AtomCenter {
            frame_index: frame,
            x,
            y,
            intensity,
            region_px,
        }
    }

    fn write_pgm(path: &Path, w: u32, h: u32, value: u8) {
        let buf = image::GrayImage::from_pixel(w, h, image::Luma([value]));
        buf.save_with_format(path, image::ImageFormat::Pnm).unwrap();
    }

    #[test]
    fn histogram_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let h = DistanceHistogram { bin_width: 0.5, counts: vec![0, 3, 1, 0, 7] };
        save_histogram(&h, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("bin_lo,bin_hi,count\n0.0,0.5,0\n"));
        assert_eq!(load_histogram(&path).unwrap(), h);
    }

    #[test]
    fn directory_of_constant_frames() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3 {
            write_pgm(&dir.path().join(format!("f{i:03}.pgm")), 8, 8, 128);
        }
        let stack = load_stack(dir.path(), StackFormat::FrameDirectory).unwrap();
        assert_eq!(stack.len(), 3);
        let v0 = stack.frames()[0].get(0, 0);
        assert!(stack.frames().iter().all(|f| f.pixels().iter().all(|&v| v == v0)));
    }

    #[test]
    fn directory_order_is_lexicographic() {
        let dir = tempfile::tempdir().unwrap();
        // written out of order on purpose
        for (name, value) in [("f002.png", 200u8), ("f000.png", 0), ("f001.png", 100)] {
            let buf = image::GrayImage::from_pixel(4, 4, image::Luma([value]));
            buf.save(dir.path().join(name)).unwrap();
        }
        let stack = load_stack(dir.path(), StackFormat::FrameDirectory).unwrap();
        let firsts: Vec<f64> = stack.frames().iter().map(|f| f.get(0, 0)).collect();
        assert_eq!(firsts, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn sixteen_bit_png_is_read() {
        let dir = tempfile::tempdir().unwrap();
        let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_fn(4, 2, |x, _| image::Luma([x as u16 * 1000]));
        buf.save(dir.path().join("a.png")).unwrap();
        let stack = load_stack(dir.path(), StackFormat::FrameDirectory).unwrap();
        assert_eq!(stack.frames()[0].get(3, 1), 1.0);
        assert!((stack.frames()[0].get(1, 0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_frame_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&dir.path().join("a.pgm"), 8, 8, 1);
        write_pgm(&dir.path().join("b.pgm"), 8, 9, 1);
        let err = load_stack(dir.path(), StackFormat::FrameDirectory).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        assert!(err.to_string().contains("b.pgm"), "{err}");
    }

    #[test]
    fn empty_directory_and_missing_path() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_stack(dir.path(), StackFormat::FrameDirectory),
            Err(Error::EmptyStack(_))
        ));
        let missing = dir.path().join("nope");
        let err = load_stack(&missing, StackFormat::RawStack).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn corrupt_image_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("broken.png"), b"not a png").unwrap();
        let err = load_stack(dir.path(), StackFormat::FrameDirectory).unwrap_err();
        assert!(err.to_string().contains("broken.png"), "{err}");
    }

    fn write_raw(path: &Path, w: usize, h: usize, declared: usize, actual: usize) {
        let payload: Vec<u8> = (0..w * h * actual)
            .flat_map(|i| (i as f32).to_le_bytes())
            .collect();
        fs::write(path, payload).unwrap();
        fs::write(raw_meta_path(path), format!("width={w}\nheight={h}\nframes={declared}\n")).unwrap();
    }

    #[test]
    fn raw_stack_of_49_frames() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stack.f32");
        write_raw(&p, 512, 512, 49, 49);
        let stack = load_stack(&p, StackFormat::RawStack).unwrap();
        assert_eq!(stack.len(), 49);
        assert_eq!((stack.width(), stack.height()), (512, 512));
        assert_eq!(stack.frames()[0].get(0, 0), 0.0);
        assert_eq!(stack.frames()[48].get(511, 511), 1.0);
    }

    #[test]
    fn raw_stack_one_frame_short() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stack.f32");
        write_raw(&p, 16, 8, 3, 2);
        let err = load_stack(&p, StackFormat::RawStack).unwrap_err();
        match &err {
            Error::ShortPayload { expected, actual, .. } => {
                assert_eq!(expected - actual, 16 * 8 * 4);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("512 bytes short"), "{err}");
    }

    #[test]
    fn raw_stack_missing_sidecar_and_key() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stack.f32");
        fs::write(&p, [0u8; 16]).unwrap();
        assert!(load_stack(&p, StackFormat::RawStack).is_err());
        fs::write(raw_meta_path(&p), "width=2\nheight=2\n").unwrap();
        let err = load_stack(&p, StackFormat::RawStack).unwrap_err();
        assert!(err.to_string().contains("frames"), "{err}");
    }

    #[test]
    fn raw_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.raw");
        let frames = (0..2)
            .map(|i| Frame::from_fn(5, 3, i, |x, y| (x + 5 * y + 15 * i) as f64 / 29.0).unwrap())
            .collect();
        let stack = ImageStack::new(frames).unwrap();
        save_raw_stack(&stack, &p).unwrap();
        let back = load_stack(&p, StackFormat::RawStack).unwrap();
        for (a, b) in stack.frames().iter().zip(back.frames()) {
            for (u, v) in a.pixels().iter().zip(b.pixels()) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn normalize_midpoint() {
        let f = Frame::new(3, 1, 0, vec![100.0, 356.0, 612.0]).unwrap();
        let s = normalize_stack(&ImageStack::new(vec![f]).unwrap()).unwrap();
        assert_eq!(s.frames()[0].pixels(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn normalize_constant_is_zero() {
        let f = Frame::filled(4, 4, 0, 7.5).unwrap();
        let s = normalize_stack(&ImageStack::new(vec![f]).unwrap()).unwrap();
        assert!(s.frames()[0].pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_is_global() {
        let a = Frame::new(2, 1, 0, vec![0.0, 1.0]).unwrap();
        let b = Frame::new(2, 1, 1, vec![0.0, 2.0]).unwrap();
        let s = normalize_stack(&ImageStack::new(vec![a, b]).unwrap()).unwrap();
        assert_eq!(s.frames()[0].pixels(), &[0.0, 0.5]);
        assert_eq!(s.frames()[1].pixels(), &[0.0, 1.0]);
        assert_eq!(normalize_stack(&s).unwrap(), s);
    }

    #[test]
    fn normalize_reports_non_finite_location() {
        let f = Frame::new(3, 2, 0, vec![0.0, 1.0, 2.0, 3.0, f64::NAN, 5.0]).unwrap();
        let err = normalize_stack(&ImageStack::new(vec![f]).unwrap()).unwrap_err();
        match err {
            Error::NonFinite { frame, x, y, .. } => assert_eq!((frame, x, y), (0, 1, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stack_rejects_bad_geometry() {
        let a = Frame::filled(2, 2, 0, 0.0).unwrap();
        let b = Frame::filled(3, 2, 1, 0.0).unwrap();
        assert!(ImageStack::new(vec![a.clone(), b]).is_err());
        assert!(ImageStack::new(vec![a.with_index(1)]).is_err());
        assert!(ImageStack::new(vec![]).is_err());
        assert!(Frame::new(2, 2, 0, vec![0.0; 3]).is_err());
        assert!(Frame::new(0, 2, 0, vec![]).is_err());
    }

    #[test]
    fn empty_centers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        save_centers(&[], &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "frame,x,y,intensity,region_px\n");
        assert!(load_centers(&p).unwrap().is_empty());
    }

    #[test]
    fn one_center_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let c = vec![center(0, 10.25, 20.5, 0.8, 12)];
        save_centers(&c, &p).unwrap();
        assert_eq!(
            fs::read_to_string(&p).unwrap(),
            "frame,x,y,intensity,region_px\n0,10.25,20.5,0.8,12\n"
        );
        assert_eq!(load_centers(&p).unwrap(), c);
    }

    #[test]
    fn malformed_center_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        fs::write(&p, "frame,x,y,intensity,region_px\n0,1,2,0.5,6\n0,abc,2,0.5,6\n").unwrap();
        match load_centers(&p).unwrap_err() {
            Error::MalformedRow { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        fs::write(&p, "frame,x,y\n").unwrap();
        assert!(matches!(load_centers(&p), Err(Error::MalformedRow { line: 1, .. })));
    }

    fn labeled(id: usize, n: usize, label: SpeciesLabel) -> LabeledTrack {
        LabeledTrack {
            track: Track {
                atom_id: id,
                positions: (0..n).map(|t| (10.0 + t as f64 * 0.1, 20.0 - t as f64 / 3.0)).collect(),
                intensities: (0..n).map(|t| 0.5 + t as f64 * 1e-3).collect(),
            },
            frame_labels: vec![label; n],
            final_label: label,
        }
    }

    #[test]
    fn tracks_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tracks.csv");
        save_tracks(&[], &p).unwrap();
        assert!(load_tracks(&p).unwrap().is_empty());

        let t = vec![labeled(0, 49, SpeciesLabel::Se)];
        save_tracks(&t, &p).unwrap();
        assert!(dir.path().join("tracks_summary.csv").exists());
        assert_eq!(load_tracks(&p).unwrap(), t);
    }

    #[test]
    fn tracks_inconsistent_summary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tracks.csv");
        save_tracks(&[labeled(3, 4, SpeciesLabel::Mo)], &p).unwrap();
        fs::write(
            summary_path(&p),
            "atom_id,final_label,votes_mo,votes_se,votes_unknown\n3,Mo,1,1,2\n",
        )
        .unwrap();
        assert!(matches!(load_tracks(&p), Err(Error::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn tracks_with_frame_gap_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tracks.csv");
        fs::write(
            &p,
            "atom_id,frame,x,y,intensity,frame_label\n0,0,1,1,0.5,Mo\n0,2,1,1,0.5,Mo\n",
        )
        .unwrap();
        fs::write(
            summary_path(&p),
            "atom_id,final_label,votes_mo,votes_se,votes_unknown\n0,Mo,2,0,0\n",
        )
        .unwrap();
        assert!(matches!(load_tracks(&p), Err(Error::MalformedRow { line: 3, .. })));
    }

    #[test]
    fn bad_label_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tracks.csv");
        fs::write(&p, "atom_id,frame,x,y,intensity,frame_label\n0,0,1,1,0.5,Xe\n").unwrap();
        assert!(matches!(load_tracks(&p), Err(Error::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn summary_path_naming() {
        assert_eq!(summary_path(Path::new("out/tracks.csv")), PathBuf::from("out/tracks_summary.csv"));
        assert_eq!(summary_path(Path::new("labels")), PathBuf::from("labels_summary.csv"));
    }
}
