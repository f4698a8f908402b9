use std::collections::BTreeSet;

use atomtrack::render::{self, RenderStyle, MO_COLOR, SE_COLOR, UNKNOWN_COLOR};
use atomtrack_core::species::classify_frame;
use atomtrack_core::synth::{self, SynthParams};
use atomtrack_core::{detect_atoms, ClassifyParams, LabeledTrack, SpeciesLabel, Track};
use image::{Rgb, RgbImage};

/// 8-connected components of pixels exactly equal to `color`.
fn blobs(img: &RgbImage, color: Rgb<u8>) -> usize {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut seen = vec![false; (w * h) as usize];
    let mut n = 0;
    for start in 0..w * h {
        if seen[start as usize] || *img.get_pixel((start % w) as u32, (start / w) as u32) != color {
            continue;
        }
        n += 1;
        let mut stack = vec![start];
        seen[start as usize] = true;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = ny * w + nx;
                    if !seen[j as usize] && *img.get_pixel(nx as u32, ny as u32) == color {
                        seen[j as usize] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    n
}

#[test]
fn one_glyph_per_labeled_center() {
    let params = SynthParams { width: 220, height: 200, seed: 1, ..Default::default() }.with_snr(10.0);
    let (stack, _) = synth::generate(&params).unwrap();
    let frame = &stack.frames()[0];
    let centers = detect_atoms(frame, &Default::default()).unwrap();
    let labels: Vec<SpeciesLabel> = classify_frame(&centers, &ClassifyParams::default())
        .unwrap()
        .iter()
        .map(|l| l.label)
        .collect();
    let img = render::render_overlay(frame, &centers, Some(&labels), &RenderStyle::default());
    let count = |l: SpeciesLabel| labels.iter().filter(|x| **x == l).count();
    assert_eq!(blobs(&img, SE_COLOR), count(SpeciesLabel::Se));
    assert_eq!(blobs(&img, MO_COLOR), count(SpeciesLabel::Mo));
    assert_eq!(blobs(&img, UNKNOWN_COLOR), count(SpeciesLabel::Unknown));
    assert!(count(SpeciesLabel::Se) > 0 && count(SpeciesLabel::Mo) > 0);
}

#[test]
fn thirty_track_ids_read_back() {
    let params = SynthParams {
        width: 340,
        height: 340,
        n_frames: 10,
        lattice_constant: 40.0,
        blob_sigma: 6.0,
        drift_per_frame: (0.2, 0.1),
        jitter_sigma: 1.0,
        seed: 8,
        ..Default::default()
    };
    let (_, truth) = synth::generate(&params).unwrap();
    let tracks: Vec<LabeledTrack> = truth
        .true_tracks()
        .into_iter()
        .take(30)
        .enumerate()
        .map(|(id, t)| {
            let n = t.positions.len();
            LabeledTrack::unlabeled(Track { atom_id: id, positions: t.positions, intensities: vec![0.5; n] })
        })
        .collect();
    assert_eq!(tracks.len(), 30);
    let plot = render::render_tracks(&tracks, 340, 340, None, &RenderStyle::default());
    let read = plot.read_labels();
    assert_eq!(read.len(), 60);
    let ids: Vec<usize> = read.iter().map(|r| r.as_ref().expect("label readable").parse().unwrap()).collect();
    for id in 0..30 {
        assert_eq!(ids.iter().filter(|&&i| i == id).count(), 2, "id {id}");
    }

    // each trajectory leaves its own pixels: drawing one track at a time
    // gives 30 different images
    let single: BTreeSet<Vec<u8>> = tracks
        .iter()
        .map(|t| render::render_tracks(std::slice::from_ref(t), 340, 340, None, &RenderStyle::default()).image.into_raw())
        .collect();
    assert_eq!(single.len(), 30);
}

#[test]
fn cumulative_sequence_grows() {
    let t = Track { atom_id: 3, positions: (0..6).map(|k| (20.0 + 5.0 * k as f64, 30.0)).collect(), intensities: vec![0.5; 6] };
    let tracks = [LabeledTrack::unlabeled(t)];
    let lit = |u: Option<usize>| {
        render::render_tracks(&tracks, 80, 60, u, &RenderStyle::default())
            .image
            .pixels()
            .filter(|p| p.0 != [0, 0, 0])
            .count()
    };
    assert!(lit(Some(0)) < lit(Some(3)));
    assert!(lit(Some(3)) < lit(Some(5)));
    assert_eq!(lit(Some(5)), lit(None));
}
