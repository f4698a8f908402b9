//! Distance structure over the centers of one frame: pairwise distance
//! histograms, fixed-radius neighbor queries on a uniform grid, annulus
//! filtering, and greedy one-to-one point matching.

use std::collections::HashMap;

use crate::blob_detect::AtomCenter;
use crate::error::{Error, Result};

/// Anything with an image-plane position.
pub trait Position {
    fn xy(&self) -> (f64, f64);
}

impl Position for AtomCenter {
    fn xy(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

impl Position for (f64, f64) {
    fn xy(&self) -> (f64, f64) {
        *self
    }
}

#[inline]
pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    (dx * dx + dy * dy).sqrt()
}

/// Closed axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

impl std::str::FromStr for Rect {
    type Err = Error;

    /// Parses `x0,y0,x1,y1`.
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidParam(format!("region `{s}` is not x0,y0,x1,y1")))?;
        match v[..] {
            [x0, y0, x1, y1] if x0 <= x1 && y0 <= y1 => Ok(Rect { x0, y0, x1, y1 }),
            _ => Err(Error::InvalidParam(format!("region `{s}` is not x0,y0,x1,y1 with x0<=x1, y0<=y1"))),
        }
    }
}

/// All unordered-pair distances among the points inside `region` (all points
/// when `None`).
pub fn pairwise_distances<P: Position>(points: &[P], region: Option<Rect>) -> Vec<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(Position::xy)
        .filter(|p| region.map_or(true, |r| r.contains(*p)))
        .collect();
    let mut out = Vec::with_capacity(pts.len() * pts.len().saturating_sub(1) / 2);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            out.push(distance(pts[i], pts[j]));
        }
    }
    out
}

/// Distance of every point to its closest other point; empty for fewer than
/// two points.
pub fn nearest_neighbor_distances<P: Position>(points: &[P]) -> Vec<f64> {
    let pts: Vec<(f64, f64)> = points.iter().map(Position::xy).collect();
    (0..pts.len())
        .filter_map(|i| {
            (0..pts.len())
                .filter(|&j| j != i)
                .map(|j| distance(pts[i], pts[j]))
                .min_by(f64::total_cmp)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceHistogram {
    pub bin_width: f64,
    /// `counts[k]` tallies distances in `[k * bin_width, (k + 1) * bin_width)`.
    pub counts: Vec<usize>,
}

impl DistanceHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn bin_range(&self, k: usize) -> (f64, f64) {
        (k as f64 * self.bin_width, (k + 1) as f64 * self.bin_width)
    }

    /// Index of the fullest bin (the first on ties).
    pub fn mode_bin(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        (max > 0).then(|| self.counts.iter().position(|&c| c == max).unwrap())
    }

    /// Center of the fullest bin.
    pub fn mode(&self) -> Option<f64> {
        self.mode_bin().map(|k| (k as f64 + 0.5) * self.bin_width)
    }
}

/// Bins distances into `[k w, (k + 1) w)`, from 0 up to the largest distance.
pub fn histogram(distances: &[f64], bin_width: f64) -> Result<DistanceHistogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidParam(format!("bin width must be positive, got {bin_width}")));
    }
    let max = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_bins = if distances.is_empty() { 0 } else { (max / bin_width).floor() as usize + 1 };
    let mut counts = vec![0; n_bins];
    for &d in distances {
        let k = ((d / bin_width).floor().max(0.0) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    Ok(DistanceHistogram { bin_width, counts })
}

/// Neighbors of one center, ascending by distance (then by index).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub center_index: usize,
    pub neighbors: Vec<(usize, f64)>,
}

/// Uniform grid over a point set, for queries with a known maximum radius.
#[derive(Debug)]
pub struct SpatialGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    points: Vec<(f64, f64)>,
}

impl SpatialGrid {
    pub fn new<P: Position>(points: &[P], cell: f64) -> Self {
        assert!(cell > 0.0, "grid cell size must be positive");
        let points: Vec<(f64, f64)> = points.iter().map(Position::xy).collect();
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, &p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { cell, cells, points }
    }

    fn key((x, y): (f64, f64), cell: f64) -> (i64, i64) {
        ((x / cell).floor() as i64, (y / cell).floor() as i64)
    }

    /// Calls `f(index, distance)` for every grid point within `radius` of `q`
    /// (inclusive). `radius` must not exceed the cell size.
    pub fn for_each_within(&self, q: (f64, f64), radius: f64, mut f: impl FnMut(usize, f64)) {
        debug_assert!(radius <= self.cell);
        let (cx, cy) = Self::key(q, self.cell);
        for gy in cy - 1..=cy + 1 {
            for gx in cx - 1..=cx + 1 {
                if let Some(ids) = self.cells.get(&(gx, gy)) {
                    for &j in ids {
                        let d = distance(q, self.points[j]);
                        if d <= radius {
                            f(j, d);
                        }
                    }
                }
            }
        }
    }
}

fn sort_neighbors(v: &mut [(usize, f64)]) {
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
}

/// For every center, all other centers within `radius` (inclusive).
pub fn fixed_radius_nn<P: Position>(points: &[P], radius: f64) -> Result<Vec<NeighborSet>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParam(format!("radius must be positive, got {radius}")));
    }
    let grid = SpatialGrid::new(points, radius);
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut neighbors = Vec::new();
            grid.for_each_within(p.xy(), radius, |j, d| {
                if j != i {
                    neighbors.push((j, d));
                }
            });
            sort_neighbors(&mut neighbors);
            NeighborSet {
                center_index: i,
                neighbors,
            }
        })
        .collect())
}

/// Keeps the neighbors with `r_in < distance <= r_out`.
pub fn annulus_filter(ns: &NeighborSet, r_in: f64, r_out: f64) -> Result<NeighborSet> {
    if !(r_in >= 0.0 && r_in < r_out) {
        return Err(Error::InvalidParam(format!("annulus needs 0 <= inner < outer, got ({r_in}, {r_out}]")));
    }
    Ok(NeighborSet {
        center_index: ns.center_index,
        neighbors: ns
            .neighbors
            .iter()
            .copied()
            .filter(|&(_, d)| d > r_in && d <= r_out)
            .collect(),
    })
}

/// Greedy one-to-one matching between `a` and `b`: every pair closer than
/// `max_dist` (or at exactly `max_dist` when `inclusive`) is sorted by distance,
/// ties by `(a, b)` index, and accepted when both ends are still free.
/// Returns `(a_index, b_index, distance)` in acceptance order.
pub fn greedy_pairs<A: Position, B: Position>(
    a: &[A],
    b: &[B],
    max_dist: f64,
    inclusive: bool,
) -> Vec<(usize, usize, f64)> {
    if a.is_empty() || b.is_empty() || !(max_dist > 0.0) {
        return Vec::new();
    }
    let grid = SpatialGrid::new(b, max_dist);
    let mut candidates = Vec::new();
    for (i, p) in a.iter().enumerate() {
        grid.for_each_within(p.xy(), max_dist, |j, d| {
            if inclusive || d < max_dist {
                candidates.push((i, j, d));
            }
        });
    }
    candidates.sort_by(|x, y| x.2.total_cmp(&y.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut out = Vec::new();
    for (i, j, d) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push((i, j, d));
        }
    }
    out
}
