//! Frame-to-frame linking of atom centers into full-length tracks.
//!
//! Every frame-0 center seeds a candidate. Consecutive frames are matched
//! greedily one-to-one on distances strictly below `r0`, and a candidate
//! survives only if it is matched in every transition.

use rayon::prelude::*;

use crate::blob_detect::AtomCenter;
use crate::error::{Error, Result};
use crate::neighbor::greedy_pairs;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackParams {
    /// Linking radius in pixels; a step must be strictly shorter.
    pub r0: f64,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self { r0: 15.0 }
    }
}

impl TrackParams {
    pub fn validate(&self) -> Result<()> {
        if self.r0 > 0.0 && self.r0.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("r0 must be positive, got {}", self.r0)))
        }
    }
}

/// One atom followed through every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub atom_id: usize,
    pub positions: Vec<(f64, f64)>,
    pub intensities: Vec<f64>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Step lengths between consecutive frames.
    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.positions
            .windows(2)
            .map(|w| crate::neighbor::distance(w[0], w[1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub prev: usize,
    pub next: usize,
    pub distance: f64,
}

/// Greedy one-to-one matching of `prev` to `next` over pairs with
/// `distance < r0`, shortest first (ties by `(prev, next)` index).
pub fn link_frames(prev: &[AtomCenter], next: &[AtomCenter], r0: f64) -> Vec<Match> {
    greedy_pairs(prev, next, r0, false)
        .into_iter()
        .map(|(prev, next, distance)| Match { prev, next, distance })
        .collect()
}

/// Links all frames and keeps the frame-0 centers that can be followed to the
/// last frame. IDs are `0..K` in frame-0 detection order.
pub fn build_tracks(stack_centers: &[Vec<AtomCenter>], params: &TrackParams) -> Result<Vec<Track>> {
    params.validate()?;
    let Some(first) = stack_centers.first() else {
        return Ok(Vec::new());
    };

    // successor[t][i]: index in frame t+1 matched to center i of frame t
    let successor: Vec<Vec<Option<usize>>> = stack_centers
        .par_windows(2)
        .map(|w| {
            let mut next = vec![None; w[0].len()];
            for m in link_frames(&w[0], &w[1], params.r0) {
                next[m.prev] = Some(m.next);
            }
            next
        })
        .collect();

    let mut tracks = Vec::new();
    'seed: for seed in 0..first.len() {
        let mut chain = Vec::with_capacity(stack_centers.len());
        chain.push(seed);
        for links in &successor {
            match links[*chain.last().unwrap()] {
                Some(j) => chain.push(j),
                None => continue 'seed,
            }
        }
        let atom_id = tracks.len();
        tracks.push(Track {
            atom_id,
            positions: chain
                .iter()
                .enumerate()
                .map(|(t, &i)| (stack_centers[t][i].x, stack_centers[t][i].y))
                .collect(),
            intensities: chain
                .iter()
                .enumerate()
                .map(|(t, &i)| stack_centers[t][i].intensity)
                .collect(),
        });
    }
    Ok(tracks)
}
