//! Mo / Se / Unknown labeling by annulus-neighbor intensity voting.
//!
//! In each frame every center whose annulus (first-neighbor shell) holds an
//! accepted number of neighbors is compared with the mean intensity of those
//! neighbors. A brighter focal center takes a Se vote, anything else a Mo
//! vote; with cross-voting on, each of its neighbors also takes one vote for
//! the opposite species, since first neighbors sit on the other sublattice.
//! A track's final label is the most frequent per-frame label.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blob_detect::AtomCenter;
use crate::error::{Error, Result};
use crate::neighbor::{annulus_filter, fixed_radius_nn};
use crate::tracker::Track;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpeciesLabel {
    Mo,
    Se,
    Unknown,
}

impl fmt::Display for SpeciesLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpeciesLabel::Mo => "Mo",
            SpeciesLabel::Se => "Se",
            SpeciesLabel::Unknown => "Unknown",
        })
    }
}

impl FromStr for SpeciesLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Mo" => Ok(SpeciesLabel::Mo),
            "Se" => Ok(SpeciesLabel::Se),
            "Unknown" => Ok(SpeciesLabel::Unknown),
            other => Err(Error::InvalidParam(format!("unknown species label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyParams {
    pub nn_radius: f64,
    pub annulus_inner: f64,
    pub annulus_outer: f64,
    pub accepted_neighbor_counts: BTreeSet<usize>,
    /// Also vote the opposite species onto each neighbor of a focal center.
    pub cross_vote: bool,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        Self {
            nn_radius: 30.0,
            annulus_inner: 20.0,
            annulus_outer: 30.0,
            accepted_neighbor_counts: [2, 3, 4].into_iter().collect(),
            cross_vote: true,
        }
    }
}

impl ClassifyParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.annulus_inner > 0.0
            && self.annulus_inner < self.annulus_outer
            && self.annulus_outer <= self.nn_radius
            && self.nn_radius.is_finite();
        if !ok {
            return Err(Error::InvalidParam(format!(
                "need 0 < annulus inner < annulus outer <= nn radius, got {} / {} / {}",
                self.annulus_inner, self.annulus_outer, self.nn_radius
            )));
        }
        if self.accepted_neighbor_counts.is_empty() {
            return Err(Error::InvalidParam("accepted neighbor counts are empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VoteRecord {
    pub center_index: usize,
    pub votes_se: usize,
    pub votes_mo: usize,
}

impl VoteRecord {
    pub fn label(&self) -> SpeciesLabel {
        use std::cmp::Ordering::*;
        match self.votes_se.cmp(&self.votes_mo) {
            Greater => SpeciesLabel::Se,
            Less => SpeciesLabel::Mo,
            Equal => SpeciesLabel::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterLabel {
    pub center_index: usize,
    pub label: SpeciesLabel,
    pub votes: VoteRecord,
}

/// Labels every center of one frame; output is in input order.
pub fn classify_frame(centers: &[AtomCenter], params: &ClassifyParams) -> Result<Vec<CenterLabel>> {
    params.validate()?;
    let mut votes: Vec<VoteRecord> = (0..centers.len())
        .map(|i| VoteRecord { center_index: i, ..Default::default() })
        .collect();
    for ns in fixed_radius_nn(centers, params.nn_radius)? {
        let shell = annulus_filter(&ns, params.annulus_inner, params.annulus_outer)?;
        if !params.accepted_neighbor_counts.contains(&shell.neighbors.len()) {
            continue;
        }
        let n = shell.neighbors.len() as f64;
        let mean = shell.neighbors.iter().map(|&(j, _)| centers[j].intensity).sum::<f64>() / n;
        let focal_se = centers[ns.center_index].intensity > mean;
        let v = &mut votes[ns.center_index];
        if focal_se {
            v.votes_se += 1;
        } else {
            v.votes_mo += 1;
        }
        if params.cross_vote {
            for &(j, _) in &shell.neighbors {
                if focal_se {
                    votes[j].votes_mo += 1;
                } else {
                    votes[j].votes_se += 1;
                }
            }
        }
    }
    Ok(votes
        .into_iter()
        .map(|v| CenterLabel { center_index: v.center_index, label: v.label(), votes: v })
        .collect())
}

/// Most frequent label; any tie for the maximum gives `Unknown`.
pub fn aggregate_track_label(per_frame: &[SpeciesLabel]) -> SpeciesLabel {
    let counts = label_counts(per_frame);
    let max = *counts.iter().max().unwrap_or(&0);
    let winners: Vec<usize> = (0..3).filter(|&i| counts[i] == max).collect();
    match winners[..] {
        [0] => SpeciesLabel::Mo,
        [1] => SpeciesLabel::Se,
        _ => SpeciesLabel::Unknown,
    }
}

/// `[mo, se, unknown]` counts.
pub fn label_counts(labels: &[SpeciesLabel]) -> [usize; 3] {
    let mut c = [0; 3];
    for l in labels {
        c[match l {
            SpeciesLabel::Mo => 0,
            SpeciesLabel::Se => 1,
            SpeciesLabel::Unknown => 2,
        }] += 1;
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrack {
    pub track: Track,
    pub frame_labels: Vec<SpeciesLabel>,
    pub final_label: SpeciesLabel,
}

impl LabeledTrack {
    /// Wraps a track with every frame `Unknown`.
    pub fn unlabeled(track: Track) -> Self {
        let n = track.len();
        Self { track, frame_labels: vec![SpeciesLabel::Unknown; n], final_label: SpeciesLabel::Unknown }
    }

    /// `[mo, se, unknown]` frame counts.
    pub fn label_counts(&self) -> [usize; 3] {
        label_counts(&self.frame_labels)
    }
}

fn position_key(x: f64, y: f64) -> (u64, u64) {
    (x.to_bits(), y.to_bits())
}

/// Classifies every frame and attaches per-frame and final labels to the
/// tracks. Track positions must coincide exactly with detected centers.
pub fn label_tracks(
    tracks: &[Track],
    stack_centers: &[Vec<AtomCenter>],
    params: &ClassifyParams,
) -> Result<Vec<LabeledTrack>> {
    params.validate()?;
    let frame_labels: Vec<HashMap<(u64, u64), SpeciesLabel>> = stack_centers
        .par_iter()
        .map(|centers| {
            let labels = classify_frame(centers, params)?;
            Ok(labels
                .iter()
                .map(|l| {
                    let c = &centers[l.center_index];
                    (position_key(c.x, c.y), l.label)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    tracks
        .iter()
        .map(|t| {
            let labels = t
                .positions
                .iter()
                .enumerate()
                .map(|(frame, &(x, y))| {
                    frame_labels
                        .get(frame)
                        .and_then(|m| m.get(&position_key(x, y)))
                        .copied()
                        .ok_or(Error::MissingCenter { atom_id: t.atom_id, frame, x, y })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(LabeledTrack {
                track: t.clone(),
                final_label: aggregate_track_label(&labels),
                frame_labels: labels,
            })
        })
        .collect()
}
