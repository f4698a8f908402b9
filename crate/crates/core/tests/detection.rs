use atomtrack_core::blob_detect::extract_centers;
use atomtrack_core::synth::{self, SynthParams};
use atomtrack_core::{detect_atoms, AtomCenter, DetectionParams, Frame};

fn lattice_frame(seed: u64, snr: f64) -> (Frame, synth::GroundTruth) {
    let params = SynthParams { width: 160, height: 128, seed, ..Default::default() }.with_snr(snr);
    let (stack, truth) = synth::generate(&params).unwrap();
    (stack.frames()[0].clone(), truth)
}

// (x, y) -> (h - 1 - y, x)
fn rotate(frame: &Frame) -> Frame {
    let h = frame.height();
    Frame::from_fn(h, frame.width(), frame.index(), |x, y| frame.get(y, h - 1 - x)).unwrap()
}

fn sorted(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.1.round().total_cmp(&b.1.round()).then(a.0.total_cmp(&b.0)));
    pts
}

fn positions(c: &[AtomCenter]) -> Vec<(f64, f64)> {
    c.iter().map(|c| (c.x, c.y)).collect()
}

#[test]
fn rotation_maps_centers_onto_rotated_centers() {
    let (frame, _) = lattice_frame(3, 10.0);
    let params = DetectionParams::default();
    let h = frame.height() as f64;
    let direct: Vec<(f64, f64)> = detect_atoms(&frame, &params)
        .unwrap()
        .iter()
        .map(|c| (h - 1.0 - c.y, c.x))
        .collect();
    let rotated = positions(&detect_atoms(&rotate(&frame), &params).unwrap());
    assert_eq!(direct.len(), rotated.len());
    let (a, b) = (sorted(direct), sorted(rotated));
    for (p, q) in a.iter().zip(&b) {
        assert!((p.0 - q.0).abs() <= 0.1 && (p.1 - q.1).abs() <= 0.1, "{p:?} vs {q:?}");
    }
}

#[test]
fn constant_shift_moves_only_intensity() {
    let (frame, _) = lattice_frame(5, 10.0);
    let (_, hi) = frame.min_max();
    let c = 0.9 * (1.0 - hi);
    let shifted = frame.with_pixels(frame.pixels().iter().map(|v| v + c).collect()).unwrap();
    let params = DetectionParams::default();
    let a = detect_atoms(&frame, &params).unwrap();
    let b = detect_atoms(&shifted, &params).unwrap();
    assert_eq!(a.len(), b.len());
    for (p, q) in a.iter().zip(&b) {
        assert!((p.x - q.x).abs() <= 1e-6 && (p.y - q.y).abs() <= 1e-6);
        assert_eq!(p.region_px, q.region_px);
        assert!((q.intensity - p.intensity - c).abs() <= 1e-9);
    }
}

#[test]
fn raising_the_percentile_never_adds_regions() {
    let (frame, _) = lattice_frame(8, 5.0);
    let mut last = usize::MAX;
    for p in [0.2, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95] {
        let n = detect_atoms(&frame, &DetectionParams { percentile: p, ..Default::default() })
            .unwrap()
            .len();
        assert!(n <= last, "percentile {p}: {n} > {last}");
        last = n;
    }
}

#[test]
fn count_matches_truth_on_lattice() {
    for seed in 0..4 {
        let (frame, truth) = lattice_frame(seed, 5.0);
        let found = detect_atoms(&frame, &DetectionParams::default()).unwrap();
        assert_eq!(found.len(), truth.frames[0].len(), "seed {seed}");
        for t in &truth.frames[0] {
            let d = found
                .iter()
                .map(|c| (c.x - t.x).hypot(c.y - t.y))
                .fold(f64::INFINITY, f64::min);
            assert!(d < 1.0, "seed {seed}: atom {} off by {d}", t.atom_id);
        }
    }
}

#[test]
fn plain_max_selection_still_finds_isolated_blobs() {
    use atomtrack_core::ScaleSelection;
    let f = Frame::from_fn(96, 96, 0, |x, y| {
        let g = |cx: f64, cy: f64| (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / 32.0).exp();
        0.1 + 0.6 * (g(30.0, 30.0) + g(66.0, 60.0))
    })
    .unwrap();
    let params = DetectionParams { scale_selection: ScaleSelection::Max, ..Default::default() };
    let mut c = positions(&detect_atoms(&f, &params).unwrap());
    c.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_eq!(c.len(), 2);
    assert!((c[0].0 - 30.0).abs() < 0.5 && (c[0].1 - 30.0).abs() < 0.5);
    assert!((c[1].0 - 66.0).abs() < 0.5 && (c[1].1 - 60.0).abs() < 0.5);
}

#[test]
fn weighted_centroid_needs_positive_weights() {
    // a region map built by hand still yields one center per region
    use atomtrack_core::blob_detect::{threshold_regions, Connectivity};
    use atomtrack_core::DetMap;
    let mut det = vec![0.0; 36];
    for i in [7, 8, 13, 14] {
        det[i] = 2.0;
    }
    let map = DetMap::from_det(6, 6, det, 2.0);
    let regions = threshold_regions(&map, 0.6, 1, Connectivity::Eight);
    let frame = Frame::filled(6, 6, 0, 0.3).unwrap();
    let c = extract_centers(&regions, &map, &frame, Default::default());
    assert_eq!(c.len(), 1);
    assert_eq!((c[0].x, c[0].y), (1.5, 1.5));
}
