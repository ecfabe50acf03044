use oet_core::features::{extract, BoundingBox};
use oet_core::metrics::{center_error, evaluate};
use oet_core::sequence_io::{load_sequence, write_sequence};
use oet_core::synth::{generate_sequence, SynthSpec};
use oet_core::tracker::{localize, score_candidates, track_sequence, Tracker, TrackerConfig};

fn small_scene(velocity: (f64, f64), noise_std: f64) -> SynthSpec {
    SynthSpec {
        width: 120,
        height: 100,
        length: 12,
        patch: BoundingBox::new(40.0, 30.0, 28.0, 28.0).unwrap(),
        velocity,
        occlusion: None,
        illumination: None,
        noise_std,
        seed: 11,
    }
}

fn quick_config() -> TrackerConfig {
    TrackerConfig { n_candidates: 120, relearn_interval: 5, ..TrackerConfig::default() }
}

#[test]
fn static_noise_free_target_stays_within_a_pixel() {
    let seq = generate_sequence(&small_scene((0.0, 0.0), 0.0)).unwrap();
    let run = track_sequence(&seq.frames, seq.ground_truth[0], &quick_config(), 2).unwrap();
    assert!(run.failed_frames.is_empty());
    for (t, (b, g)) in run.boxes.iter().zip(&seq.ground_truth).enumerate() {
        assert!(center_error(b, g) <= 1.0, "frame {t}: {b:?} vs {g:?}");
    }
}

#[test]
fn true_box_beats_distractors_ten_pixels_away() {
    let seq = generate_sequence(&small_scene((0.0, 0.0), 0.01)).unwrap();
    let truth = seq.ground_truth[0];
    let tracker = Tracker::new(&seq.frames[0], truth, quick_config(), 1).unwrap();
    let frame = &seq.frames[1];
    let mut boxes = vec![seq.ground_truth[1]];
    for k in 0..8 {
        let angle = k as f64 * std::f64::consts::FRAC_PI_4;
        for r in [10.0, 14.0] {
            boxes.push(truth.translated(r * angle.cos(), r * angle.sin()));
        }
    }
    let mode = tracker.config().feature_mode;
    let features: Vec<_> = boxes.iter().map(|b| extract(frame, b, mode).ok()).collect();
    let app = tracker.appearance();
    let psi = score_candidates(&features, &app.model, &app.classifier, &tracker.config().projection).unwrap();
    assert_eq!(localize(&psi).unwrap(), 0, "scores {psi:?}");
}

#[test]
fn moving_target_is_followed_through_files_on_disk() {
    let seq = generate_sequence(&small_scene((1.5, 1.0), 0.02)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_sequence(dir.path(), &seq.frames, &seq.ground_truth).unwrap();
    let manifest = load_sequence(dir.path()).unwrap();
    let frames = manifest.load_frames().unwrap();
    let gt = manifest.ground_truth.unwrap();
    let run = track_sequence(&frames, gt[0], &quick_config(), 0).unwrap();
    let report = evaluate(&run.boxes, &gt).unwrap();
    assert!(report.mean_center_error < 2.0, "{report:?}");
    assert_eq!(report.precision_at_20, 1.0);
}
