//! Synthetic honeycomb lattice stacks with known ground truth, and scoring
//! of detections and tracks against that truth.
//!
//! The lattice is a two-site honeycomb with first-neighbor distance
//! `lattice_constant`: sublattice A carries Mo and sublattice B carries Se, so
//! every atom's first neighbors are of the other species. Each atom is an
//! isotropic Gaussian of height `peak` (Mo) or `peak * (1 + species_contrast)`
//! (Se) on a flat `background`, followed by additive Gaussian noise and
//! clamping to `[0, 1]`.
//!
//! Randomness comes from ChaCha8 seeded with `seed`: stream 0 draws vacancies
//! and stream `t + 1` draws the jitter and pixel noise of frame `t`, so frames
//! render independently and the output is bit-identical for a fixed seed.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::blob_detect::AtomCenter;
use crate::error::{Error, Result};
use crate::neighbor::{distance, greedy_pairs, Position};
use crate::species::{LabeledTrack, SpeciesLabel};
use crate::stack_io::{csv_error, csv_writer, Frame, ImageStack};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    /// First-neighbor distance in pixels.
    pub lattice_constant: f64,
    pub blob_sigma: f64,
    /// Fractional brightness of Se over Mo.
    pub species_contrast: f64,
    /// Height of a Mo blob above the background.
    pub peak: f64,
    pub background: f64,
    /// Standard deviation of additive pixel noise, in intensity units.
    pub noise_sigma: f64,
    pub drift_per_frame: (f64, f64),
    /// Per-atom, per-frame positional noise (pixels).
    pub jitter_sigma: f64,
    pub vacancy_fraction: f64,
    /// `(atom_id, frame)`: the atom is absent from `frame` onward.
    pub disappear_events: Vec<(usize, usize)>,
    /// Lattice sites closer than this to the frame border are left empty.
    pub margin: f64,
    /// Offset of the lattice origin (pixels).
    pub origin: (f64, f64),
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            n_frames: 1,
            lattice_constant: 25.0,
            blob_sigma: 5.0,
            species_contrast: 0.08,
            peak: 0.75,
            background: 0.1,
            noise_sigma: 0.0,
            drift_per_frame: (0.0, 0.0),
            jitter_sigma: 0.0,
            vacancy_fraction: 0.0,
            disappear_events: Vec::new(),
            margin: 25.0,
            origin: (0.0, 0.0),
            seed: 0,
        }
    }
}

impl SynthParams {
    /// Noise level giving `peak / noise_sigma == snr`.
    pub fn with_snr(mut self, snr: f64) -> Self {
        self.noise_sigma = if snr.is_infinite() { 0.0 } else { self.peak / snr };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidParam(m));
        if self.width == 0 || self.height == 0 || self.n_frames == 0 {
            return fail("width, height and frame count must be positive".into());
        }
        if !(self.blob_sigma > 0.0) || !(self.lattice_constant > 2.0 * self.blob_sigma) {
            return fail(format!(
                "need lattice constant > 2 * blob sigma > 0, got {} and {}",
                self.lattice_constant, self.blob_sigma
            ));
        }
        for (name, v) in [("species contrast", self.species_contrast), ("vacancy fraction", self.vacancy_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.peak > 0.0) || !(self.background >= 0.0) {
            return fail("peak must be positive and background non-negative".into());
        }
        if !(self.noise_sigma >= 0.0) || !(self.jitter_sigma >= 0.0) || !(self.margin >= 0.0) {
            return fail("noise, jitter and margin must be non-negative".into());
        }
        for &(atom, frame) in &self.disappear_events {
            if frame >= self.n_frames {
                return fail(format!("disappear event ({atom}, {frame}) is past the last frame"));
            }
        }
        Ok(())
    }

    pub fn amplitude(&self, species: SpeciesLabel) -> f64 {
        match species {
            SpeciesLabel::Se => self.peak * (1.0 + self.species_contrast),
            _ => self.peak,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueAtom {
    pub atom_id: usize,
    pub species: SpeciesLabel,
    /// Undisplaced lattice position.
    pub site: (f64, f64),
    /// All three first-neighbor sites are occupied.
    pub interior: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueCenter {
    pub atom_id: usize,
    pub species: SpeciesLabel,
    pub x: f64,
    pub y: f64,
}

impl Position for TrueCenter {
    fn xy(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueTrack {
    pub atom_id: usize,
    pub species: SpeciesLabel,
    pub positions: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub atoms: Vec<TrueAtom>,
    /// Atoms present in each frame, in atom order.
    pub frames: Vec<Vec<TrueCenter>>,
}

impl GroundTruth {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// Atoms present in every frame, with their per-frame positions.
    pub fn true_tracks(&self) -> Vec<TrueTrack> {
        let n = self.frames.len();
        let mut positions: HashMap<usize, Vec<(f64, f64)>> = HashMap::new();
        for frame in &self.frames {
            for c in frame {
                positions.entry(c.atom_id).or_default().push((c.x, c.y));
            }
        }
        self.atoms
            .iter()
            .filter_map(|a| {
                let p = positions.remove(&a.atom_id)?;
                (p.len() == n).then(|| TrueTrack { atom_id: a.atom_id, species: a.species, positions: p })
            })
            .collect()
    }

    pub fn atom(&self, id: usize) -> &TrueAtom {
        &self.atoms[id]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Sub {
    A,
    B,
}

/// Renders the stack and its ground truth.
pub fn generate(params: &SynthParams) -> Result<(ImageStack, GroundTruth)> {
    params.validate()?;
    let a = params.lattice_constant;
    let (w, h) = (params.width as f64, params.height as f64);
    let sq3 = 3f64.sqrt();
    let pos = |i: i64, j: i64, s: Sub| -> (f64, f64) {
        let x = params.origin.0 + sq3 * a * i as f64 + sq3 * a / 2.0 * j as f64;
        let y = params.origin.1 + 1.5 * a * j as f64 + if s == Sub::B { a } else { 0.0 };
        (x, y)
    };
    let inside = |(x, y): (f64, f64)| {
        x >= params.margin && x <= w - 1.0 - params.margin && y >= params.margin && y <= h - 1.0 - params.margin
    };

    let j_max = (h / (1.5 * a)).ceil() as i64 + 2;
    let i_span = (w / (sq3 * a)).ceil() as i64 + j_max + 2;
    let mut sites: Vec<(i64, i64, Sub, (f64, f64))> = Vec::new();
    for j in -2..=j_max {
        for i in -i_span..=i_span {
            for s in [Sub::A, Sub::B] {
                let p = pos(i, j, s);
                if inside(p) {
                    sites.push((i, j, s, p));
                }
            }
        }
    }
    sites.sort_by(|p, q| p.3 .1.total_cmp(&q.3 .1).then(p.3 .0.total_cmp(&q.3 .0)));

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(0);
    let occupied: Vec<_> = sites
        .into_iter()
        .filter(|_| params.vacancy_fraction == 0.0 || rng.random::<f64>() >= params.vacancy_fraction)
        .collect();
    let index: HashMap<(i64, i64, Sub), usize> =
        occupied.iter().enumerate().map(|(k, &(i, j, s, _))| ((i, j, s), k)).collect();
    let atoms: Vec<TrueAtom> = occupied
        .iter()
        .enumerate()
        .map(|(k, &(i, j, s, site))| {
            let neighbors = match s {
                Sub::A => [(i, j, Sub::B), (i, j - 1, Sub::B), (i + 1, j - 1, Sub::B)],
                Sub::B => [(i, j, Sub::A), (i, j + 1, Sub::A), (i - 1, j + 1, Sub::A)],
            };
            TrueAtom {
                atom_id: k,
                species: if s == Sub::A { SpeciesLabel::Mo } else { SpeciesLabel::Se },
                site,
                interior: neighbors.iter().all(|n| index.contains_key(n)),
            }
        })
        .collect();

    let mut gone_from = vec![usize::MAX; atoms.len()];
    for &(atom, frame) in &params.disappear_events {
        if atom >= atoms.len() {
            return Err(Error::InvalidParam(format!(
                "disappear event names atom {atom}, lattice has {}",
                atoms.len()
            )));
        }
        gone_from[atom] = gone_from[atom].min(frame);
    }

    let rendered: Vec<(Frame, Vec<TrueCenter>)> = (0..params.n_frames)
        .into_par_iter()
        .map(|t| render_frame(params, &atoms, &gone_from, t))
        .collect::<Result<_>>()?;
    let (frames, truth_frames): (Vec<_>, Vec<_>) = rendered.into_iter().unzip();
    Ok((ImageStack::new(frames)?, GroundTruth { atoms, frames: truth_frames }))
}

fn render_frame(
    params: &SynthParams,
    atoms: &[TrueAtom],
    gone_from: &[usize],
    t: usize,
) -> Result<(Frame, Vec<TrueCenter>)> {
    let (w, h) = (params.width, params.height);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(t as u64 + 1);
    let mut normal = |sigma: f64| -> f64 {
        if sigma > 0.0 {
            sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        }
    };

    let mut centers = Vec::new();
    for atom in atoms {
        // draw for every atom so the stream layout is independent of presence
        let jx = normal(params.jitter_sigma);
        let jy = normal(params.jitter_sigma);
        let x = atom.site.0 + params.drift_per_frame.0 * t as f64 + jx;
        let y = atom.site.1 + params.drift_per_frame.1 * t as f64 + jy;
        let in_frame = x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64;
        if t < gone_from[atom.atom_id] && in_frame {
            centers.push(TrueCenter { atom_id: atom.atom_id, species: atom.species, x, y });
        }
    }

    let mut pixels = vec![params.background; w * h];
    let s = params.blob_sigma;
    let reach = (5.0 * s).ceil();
    for c in &centers {
        let amp = params.amplitude(c.species);
        let x0 = (c.x - reach).max(0.0) as usize;
        let x1 = ((c.x + reach) as usize).min(w - 1);
        let y0 = (c.y - reach).max(0.0) as usize;
        let y1 = ((c.y + reach) as usize).min(h - 1);
        for py in y0..=y1 {
            let dy = py as f64 - c.y;
            for px in x0..=x1 {
                let dx = px as f64 - c.x;
                pixels[py * w + px] += amp * (-(dx * dx + dy * dy) / (2.0 * s * s)).exp();
            }
        }
    }
    for p in pixels.iter_mut() {
        *p = (*p + normal(params.noise_sigma)).clamp(0.0, 1.0);
    }
    Ok((Frame::new(w, h, t, pixels)?, centers))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScore {
    pub recall: f64,
    pub precision: f64,
    /// Localization RMSE over matched pairs (pixels).
    pub rmse: f64,
    pub n_truth: usize,
    pub n_detected: usize,
    pub n_matched: usize,
}

/// Greedy nearest matching of detections to truth, frame by frame, within
/// `match_radius` (inclusive).
pub fn score_detections(truth: &GroundTruth, detected: &[Vec<AtomCenter>], match_radius: f64) -> Result<DetectionScore> {
    if !(match_radius > 0.0) {
        return Err(Error::InvalidParam(format!("match radius must be positive, got {match_radius}")));
    }
    let (mut n_truth, mut n_detected, mut n_matched, mut sq) = (0, 0, 0, 0.0);
    let empty = Vec::new();
    for (t, tf) in truth.frames.iter().enumerate() {
        let df = detected.get(t).unwrap_or(&empty);
        n_truth += tf.len();
        n_detected += df.len();
        for (_, _, d) in greedy_pairs(tf, df, match_radius, true) {
            n_matched += 1;
            sq += d * d;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    Ok(DetectionScore {
        recall: ratio(n_matched, n_truth),
        precision: ratio(n_matched, n_detected),
        rmse: if n_matched == 0 { 0.0 } else { (sq / n_matched as f64).sqrt() },
        n_truth,
        n_detected,
        n_matched,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackMatch {
    pub atom_id: usize,
    pub true_atom: Option<usize>,
    /// Fraction of frames in which the nearest true atom is `true_atom`.
    pub consistency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackScore {
    /// Full-length true atoms claimed by some track at frame 0.
    pub track_recall: f64,
    /// Mean consistency over matched tracks.
    pub id_consistency: f64,
    /// Full-length true atoms whose track follows them in every frame.
    pub fully_consistent: f64,
    /// Final-label accuracy over matched interior atoms.
    pub label_accuracy: f64,
    pub n_true_tracks: usize,
    pub per_track: Vec<TrackMatch>,
}

fn nearest_atom(frame: &[TrueCenter], p: (f64, f64), radius: f64) -> Option<usize> {
    frame
        .iter()
        .map(|c| (c.atom_id, distance(p, c.xy())))
        .filter(|&(_, d)| d <= radius)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(id, _)| id)
}

/// Matches tracks to true atoms by frame-0 proximity and scores identity and
/// label agreement.
pub fn score_tracks(truth: &GroundTruth, tracks: &[LabeledTrack], match_radius: f64) -> Result<TrackScore> {
    if !(match_radius > 0.0) {
        return Err(Error::InvalidParam(format!("match radius must be positive, got {match_radius}")));
    }
    let true_tracks = truth.true_tracks();
    let full: std::collections::HashSet<usize> = true_tracks.iter().map(|t| t.atom_id).collect();
    let frame0 = truth.frames.first().cloned().unwrap_or_default();
    let starts: Vec<(f64, f64)> = tracks.iter().map(|t| t.track.positions.first().copied().unwrap_or((f64::NAN, f64::NAN))).collect();
    let mut assigned: Vec<Option<usize>> = vec![None; tracks.len()];
    for (ti, ci, _) in greedy_pairs(&starts, &frame0, match_radius, true) {
        assigned[ti] = Some(frame0[ci].atom_id);
    }

    let mut per_track = Vec::with_capacity(tracks.len());
    for (t, atom) in tracks.iter().zip(&assigned) {
        let consistency = match atom {
            Some(id) => {
                let hits = t
                    .track
                    .positions
                    .iter()
                    .enumerate()
                    .filter(|&(f, &p)| truth.frames.get(f).and_then(|fr| nearest_atom(fr, p, match_radius)) == Some(*id))
                    .count();
                hits as f64 / truth.n_frames().max(1) as f64
            }
            None => 0.0,
        };
        per_track.push(TrackMatch { atom_id: t.track.atom_id, true_atom: *atom, consistency });
    }

    let matched: Vec<(&TrackMatch, &LabeledTrack)> = per_track.iter().zip(tracks).filter(|(m, _)| m.true_atom.is_some()).collect();
    let claimed: std::collections::HashSet<usize> =
        matched.iter().filter_map(|(m, _)| m.true_atom).filter(|id| full.contains(id)).collect();
    let consistent: std::collections::HashSet<usize> = matched
        .iter()
        .filter(|(m, _)| m.consistency == 1.0)
        .filter_map(|(m, _)| m.true_atom)
        .filter(|id| full.contains(id))
        .collect();
    let interior: Vec<_> = matched.iter().filter(|(m, _)| truth.atom(m.true_atom.unwrap()).interior).collect();
    let correct = interior
        .iter()
        .filter(|(m, t)| t.final_label == truth.atom(m.true_atom.unwrap()).species)
        .count();
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(TrackScore {
        track_recall: frac(claimed.len(), full.len()),
        id_consistency: if matched.is_empty() { 0.0 } else { matched.iter().map(|(m, _)| m.consistency).sum::<f64>() / matched.len() as f64 },
        fully_consistent: frac(consistent.len(), full.len()),
        label_accuracy: frac(correct, interior.len()),
        n_true_tracks: full.len(),
        per_track,
    })
}

#[derive(Serialize)]
struct TruthCenterRow {
    frame: usize,
    x: f64,
    y: f64,
    intensity: f64,
    region_px: usize,
    true_species: SpeciesLabel,
    true_atom_id: usize,
}

#[derive(Serialize)]
struct TruthTrackRow {
    atom_id: usize,
    frame: usize,
    x: f64,
    y: f64,
    intensity: f64,
    frame_label: SpeciesLabel,
    true_species: SpeciesLabel,
    true_atom_id: usize,
}

/// Ground-truth centers in the centers layout plus `true_species,true_atom_id`.
/// `intensity` is the blob height and `region_px` is 0.
pub fn save_truth_centers(truth: &GroundTruth, params: &SynthParams, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = crate::stack_io::CENTER_HEADER.to_vec();
    header.extend(["true_species", "true_atom_id"]);
    crate::stack_io::write_header(&mut w, &header, path)?;
    for (t, frame) in truth.frames.iter().enumerate() {
        for c in frame {
            w.serialize(TruthCenterRow {
                frame: t,
                x: c.x,
                y: c.y,
                intensity: params.amplitude(c.species),
                region_px: 0,
                true_species: c.species,
                true_atom_id: c.atom_id,
            })
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Full-length true tracks in the tracks layout plus `true_species,true_atom_id`.
pub fn save_truth_tracks(truth: &GroundTruth, params: &SynthParams, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = crate::stack_io::TRACK_HEADER.to_vec();
    header.extend(["true_species", "true_atom_id"]);
    crate::stack_io::write_header(&mut w, &header, path)?;
    for tt in truth.true_tracks() {
        for (frame, &(x, y)) in tt.positions.iter().enumerate() {
            w.serialize(TruthTrackRow {
                atom_id: tt.atom_id,
                frame,
                x,
                y,
                intensity: params.amplitude(tt.species),
                frame_label: tt.species,
                true_species: tt.species,
                true_atom_id: tt.atom_id,
            })
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::Track;

    fn small() -> SynthParams {
        SynthParams { width: 160, height: 140, n_frames: 3, ..Default::default() }
    }

    #[test]
    fn static_noise_free_frames_are_identical() {
        let (stack, truth) = generate(&small()).unwrap();
        let f0 = &stack.frames()[0];
        assert!(stack.frames().iter().all(|f| f.pixels() == f0.pixels()));
        for tt in truth.true_tracks() {
            assert!(tt.positions.iter().all(|&p| p == tt.positions[0]));
        }
        assert!(!truth.atoms.is_empty());
    }

    #[test]
    fn first_neighbor_distance_equals_lattice_constant() {
        let (_, truth) = generate(&SynthParams { width: 300, height: 300, ..Default::default() }).unwrap();
        let pts: Vec<(f64, f64)> = truth.atoms.iter().map(|a| a.site).collect();
        for (i, a) in truth.atoms.iter().enumerate() {
            let mut near: Vec<(f64, usize)> = pts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, &p)| (distance(a.site, p), j))
                .collect();
            near.sort_by(|x, y| x.0.total_cmp(&y.0));
            assert!((near[0].0 - 25.0).abs() < 1e-9);
            // first neighbors are the other species
            for &(d, j) in &near {
                if (d - 25.0).abs() < 1e-9 {
                    assert_ne!(truth.atoms[j].species, a.species);
                }
            }
            if a.interior {
                assert_eq!(near.iter().filter(|(d, _)| (d - 25.0).abs() < 1e-9).count(), 3);
            }
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let p = SynthParams { noise_sigma: 0.05, jitter_sigma: 1.0, vacancy_fraction: 0.1, seed: 9, ..small() };
        let (a, ta) = generate(&p).unwrap();
        let (b, tb) = generate(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate(&SynthParams { seed: 10, ..p }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn vacancies_and_disappearances() {
        let base = SynthParams { width: 300, height: 300, ..small() };
        let (_, full) = generate(&base).unwrap();
        let (_, sparse) = generate(&SynthParams { vacancy_fraction: 0.3, seed: 4, ..base.clone() }).unwrap();
        assert!(sparse.atoms.len() < full.atoms.len());
        assert!(sparse.atoms.iter().filter(|a| a.interior).count() < full.atoms.iter().filter(|a| a.interior).count());

        let (_, gone) = generate(&SynthParams { disappear_events: vec![(5, 2)], ..base.clone() }).unwrap();
        assert!(gone.frames[1].iter().any(|c| c.atom_id == 5));
        assert!(!gone.frames[2].iter().any(|c| c.atom_id == 5));
        assert_eq!(gone.true_tracks().len(), full.true_tracks().len() - 1);
        assert!(generate(&SynthParams { disappear_events: vec![(100_000, 1)], ..base }).is_err());
    }

    #[test]
    fn invalid_params() {
        for p in [
            SynthParams { lattice_constant: 9.0, ..small() },
            SynthParams { vacancy_fraction: 1.5, ..small() },
            SynthParams { n_frames: 0, ..small() },
            SynthParams { disappear_events: vec![(0, 3)], ..small() },
        ] {
            assert!(generate(&p).is_err());
        }
    }

    #[test]
    fn amplitudes_and_clamp() {
        let (stack, _) = generate(&SynthParams { noise_sigma: 0.5, seed: 1, ..small() }).unwrap();
        assert!(stack.frames().iter().all(Frame::is_normalized));
        let p = small();
        assert_eq!(p.amplitude(SpeciesLabel::Mo), 0.75);
        assert!((p.amplitude(SpeciesLabel::Se) - 0.81).abs() < 1e-12);
    }

    fn as_detections(truth: &GroundTruth, shift: (f64, f64)) -> Vec<Vec<AtomCenter>> {
        truth
            .frames
            .iter()
            .enumerate()
            .map(|(t, f)| {
                f.iter()
                    .map(|c| AtomCenter { frame_index: t, x: c.x + shift.0, y: c.y + shift.1, intensity: 0.5, region_px: 9 })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn detection_scores() {
        let (_, truth) = generate(&small()).unwrap();
        let s = score_detections(&truth, &as_detections(&truth, (0.0, 0.0)), 5.0).unwrap();
        assert_eq!((s.recall, s.precision, s.rmse), (1.0, 1.0, 0.0));

        let s = score_detections(&truth, &as_detections(&truth, (0.3, 0.4)), 5.0).unwrap();
        assert!((s.rmse - 0.5).abs() < 1e-12);

        let one = GroundTruth { atoms: truth.atoms.clone(), frames: vec![truth.frames[0][..10].to_vec()] };
        let mut det = as_detections(&one, (0.0, 0.0));
        det[0].push(AtomCenter { frame_index: 0, x: 1.0, y: 1.0, intensity: 0.1, region_px: 5 });
        let s = score_detections(&one, &det, 5.0).unwrap();
        assert_eq!(s.recall, 1.0);
        assert!((s.precision - 10.0 / 11.0).abs() < 1e-12);
    }

    fn perfect_tracks(truth: &GroundTruth) -> Vec<LabeledTrack> {
        truth
            .true_tracks()
            .into_iter()
            .enumerate()
            .map(|(k, tt)| LabeledTrack {
                track: Track { atom_id: k, intensities: vec![0.5; tt.positions.len()], positions: tt.positions },
                frame_labels: vec![tt.species; truth.n_frames()],
                final_label: tt.species,
            })
            .collect()
    }

    #[test]
    fn perfect_tracks_score_one() {
        let (_, truth) = generate(&small()).unwrap();
        let s = score_tracks(&truth, &perfect_tracks(&truth), 5.0).unwrap();
        assert_eq!((s.track_recall, s.id_consistency, s.fully_consistent, s.label_accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn identity_swap_halves_consistency() {
        let (_, truth) = generate(&SynthParams { n_frames: 49, ..small() }).unwrap();
        let mut tracks = perfect_tracks(&truth);
        let (a, b) = (0, 1);
        for f in 25..49 {
            let pa = tracks[a].track.positions[f];
            tracks[a].track.positions[f] = tracks[b].track.positions[f];
            tracks[b].track.positions[f] = pa;
        }
        let s = score_tracks(&truth, &tracks, 5.0).unwrap();
        assert!((s.per_track[a].consistency - 25.0 / 49.0).abs() < 1e-12);
        assert!((s.per_track[b].consistency - 25.0 / 49.0).abs() < 1e-12);
        assert!(s.per_track[2..].iter().all(|m| m.consistency == 1.0));
        assert!(s.fully_consistent < 1.0);
    }

    #[test]
    fn unknown_labels_score_zero() {
        let (_, truth) = generate(&small()).unwrap();
        let mut tracks = perfect_tracks(&truth);
        for t in &mut tracks {
            t.final_label = SpeciesLabel::Unknown;
        }
        assert_eq!(score_tracks(&truth, &tracks, 5.0).unwrap().label_accuracy, 0.0);
    }
}
