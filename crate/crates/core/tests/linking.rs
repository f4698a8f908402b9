use std::collections::BTreeSet;

use atomtrack_core::blob_detect::AtomCenter;
use atomtrack_core::species::classify_frame;
use atomtrack_core::synth::{self, SynthParams};
use atomtrack_core::tracker::link_frames;
use atomtrack_core::{build_tracks, ClassifyParams, TrackParams};
use proptest::prelude::*;

fn truth_as_detections(params: &SynthParams) -> Vec<Vec<AtomCenter>> {
    let (_, truth) = synth::generate(params).unwrap();
    truth
        .frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            f.iter()
                .map(|c| AtomCenter { frame_index: t, x: c.x, y: c.y, intensity: 0.5, region_px: 1 })
                .collect()
        })
        .collect()
}

fn seeds(frames: &[Vec<AtomCenter>], r0: f64) -> BTreeSet<(u64, u64)> {
    build_tracks(frames, &TrackParams { r0 })
        .unwrap()
        .iter()
        .map(|t| (t.positions[0].0.to_bits(), t.positions[0].1.to_bits()))
        .collect()
}

#[test]
fn tracked_set_grows_with_r0() {
    let params = SynthParams {
        n_frames: 12,
        jitter_sigma: 2.5,
        drift_per_frame: (0.3, -0.2),
        vacancy_fraction: 0.05,
        seed: 11,
        ..Default::default()
    };
    let frames = truth_as_detections(&params);
    let radii = [1.0, 2.0, 3.0, 4.0, 6.0, 9.0, 15.0];
    let sets: Vec<_> = radii.iter().map(|&r| seeds(&frames, r)).collect();
    for w in sets.windows(2) {
        assert!(w[0].is_subset(&w[1]));
    }
    assert!(sets[0].len() < sets[6].len());
}

#[test]
fn tracks_are_deterministic_and_bounded() {
    let params = SynthParams { n_frames: 10, jitter_sigma: 2.0, drift_per_frame: (0.2, 0.1), seed: 4, ..Default::default() };
    let frames = truth_as_detections(&params);
    let a = build_tracks(&frames, &TrackParams::default()).unwrap();
    let b = build_tracks(&frames, &TrackParams::default()).unwrap();
    assert_eq!(a, b);
    for t in &a {
        assert_eq!(t.len(), 10);
        assert!(t.steps().all(|s| s < 15.0));
    }
}

fn centers(pts: &[(f64, f64, f64)]) -> Vec<AtomCenter> {
    pts.iter()
        .map(|&(x, y, i)| AtomCenter { frame_index: 0, x, y, intensity: i, region_px: 1 })
        .collect()
}

proptest! {
    #[test]
    fn matching_is_one_to_one(
        a in prop::collection::vec((0.0..100.0f64, 0.0..100.0f64, 0.0..1.0f64), 0..40),
        b in prop::collection::vec((0.0..100.0f64, 0.0..100.0f64, 0.0..1.0f64), 0..40),
        r0 in 1.0..30.0f64,
    ) {
        let m = link_frames(&centers(&a), &centers(&b), r0);
        let prev: BTreeSet<_> = m.iter().map(|m| m.prev).collect();
        let next: BTreeSet<_> = m.iter().map(|m| m.next).collect();
        prop_assert_eq!(prev.len(), m.len());
        prop_assert_eq!(next.len(), m.len());
        prop_assert!(m.iter().all(|m| m.distance < r0));
    }

    #[test]
    fn labels_ignore_order_and_intensity_scale(
        pts in prop::collection::vec((0.0..120.0f64, 0.0..120.0f64, 0.01..1.0f64), 1..60),
        c in 0.1..10.0f64,
        rot in 0usize..60,
    ) {
        let p = ClassifyParams::default();
        let base = classify_frame(&centers(&pts), &p).unwrap();

        let scaled: Vec<_> = pts.iter().map(|&(x, y, i)| (x, y, i * c)).collect();
        let s = classify_frame(&centers(&scaled), &p).unwrap();
        prop_assert!(base.iter().zip(&s).all(|(a, b)| a.label == b.label));

        let k = rot % pts.len();
        let mut perm = pts.clone();
        perm.rotate_left(k);
        let r = classify_frame(&centers(&perm), &p).unwrap();
        for (i, l) in r.iter().enumerate() {
            let orig = (i + k) % pts.len();
            prop_assert_eq!(l.label, base[orig].label);
            prop_assert_eq!(l.votes.votes_se, base[orig].votes.votes_se);
            prop_assert_eq!(l.votes.votes_mo, base[orig].votes.votes_mo);
        }
    }

    #[test]
    fn votes_are_conserved(
        pts in prop::collection::vec((0.0..120.0f64, 0.0..120.0f64, 0.01..1.0f64), 1..60),
    ) {
        let p = ClassifyParams::default();
        let labels = classify_frame(&centers(&pts), &p).unwrap();
        let cast: usize = labels.iter().map(|l| l.votes.votes_se + l.votes.votes_mo).sum();
        // brute-force shell counts
        let mut expected = 0;
        for (i, a) in pts.iter().enumerate() {
            let n = pts
                .iter()
                .enumerate()
                .filter(|&(j, b)| {
                    let d = (a.0 - b.0).hypot(a.1 - b.1);
                    j != i && d > 20.0 && d <= 30.0
                })
                .count();
            if (2..=4).contains(&n) {
                expected += 1 + n;
            }
        }
        prop_assert_eq!(cast, expected);
    }
}

#[test]
fn perfect_lattice_sublattices_get_opposite_labels() {
    let params = SynthParams { width: 320, height: 320, seed: 2, ..Default::default() };
    let (stack, truth) = synth::generate(&params).unwrap();
    let det = atomtrack_core::detect_atoms(&stack.frames()[0], &Default::default()).unwrap();
    let labels = classify_frame(&det, &ClassifyParams::default()).unwrap();
    let mut checked = 0;
    for (c, l) in det.iter().zip(&labels) {
        let t = truth.frames[0]
            .iter()
            .min_by(|a, b| (a.x - c.x).hypot(a.y - c.y).total_cmp(&(b.x - c.x).hypot(b.y - c.y)))
            .unwrap();
        if truth.atom(t.atom_id).interior {
            assert_eq!(l.label, t.species, "atom {}", t.atom_id);
            checked += 1;
        }
    }
    assert!(checked > 50);
}
