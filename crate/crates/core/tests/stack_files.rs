use atomtrack_core::stack_io::{self, load_stack, normalize_stack, save_frame_directory, save_raw_stack};
use atomtrack_core::synth::{self, SynthParams};
use atomtrack_core::{Error, StackFormat};

fn sample() -> atomtrack_core::ImageStack {
    let params = SynthParams { width: 48, height: 40, n_frames: 3, noise_sigma: 0.05, seed: 9, ..Default::default() };
    normalize_stack(&synth::generate(&params).unwrap().0).unwrap()
}

#[test]
fn raw_stack_round_trips_to_f32_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stack.raw");
    let stack = sample();
    save_raw_stack(&stack, &path).unwrap();
    let back = load_stack(&path, StackFormat::RawStack).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in stack.frames().iter().zip(back.frames()) {
        for (p, q) in a.pixels().iter().zip(b.pixels()) {
            assert!((p - q).abs() < 1e-6);
        }
    }
}

#[test]
fn frame_directory_keeps_declared_order() {
    let dir = tempfile::tempdir().unwrap();
    let stack = sample();
    save_frame_directory(&stack, dir.path()).unwrap();
    let back = load_stack(dir.path(), StackFormat::FrameDirectory).unwrap();
    for (t, (a, b)) in stack.frames().iter().zip(back.frames()).enumerate() {
        assert_eq!(b.index(), t);
        let err = a.pixels().iter().zip(b.pixels()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err <= 1.0 / 65535.0 + 1e-9, "frame {t}: {err}");
    }
}

#[test]
fn normalization_is_idempotent() {
    let s = sample();
    assert_eq!(normalize_stack(&s).unwrap(), s);
}

#[test]
fn truncated_payload_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stack.raw");
    save_raw_stack(&sample(), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    match load_stack(&path, StackFormat::RawStack) {
        Err(Error::ShortPayload { .. }) => {}
        other => panic!("expected a short-payload error, got {other:?}"),
    }
    assert!(stack_io::raw_meta_path(&path).exists());
}
