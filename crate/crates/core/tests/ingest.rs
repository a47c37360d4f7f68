use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saccade_core::gpd::GpdParams;
use saccade_core::ingest::{
    parse_trace_file, parse_traces, segment_fixations, write_traces, EyeSample, EyeTrace, IngestConfig,
    SegmentationParams,
};
use saccade_core::synth::{generate_traces, ObserverProfile};

fn random_trace(rng: &mut impl Rng, observer: &str, image: &str, labeled: bool) -> EyeTrace {
    let mut t = 0.0;
    let samples = (0..rng.random_range(5..40))
        .map(|_| {
            t += rng.random_range(0.5..10.0);
            let (x, y) = (rng.random_range(-20.0..1300.0), rng.random_range(0.0..1024.0));
            if labeled {
                EyeSample::labeled(t, x, y, rng.random_bool(0.5))
            } else {
                EyeSample::new(t, x, y)
            }
        })
        .collect();
    EyeTrace::new(observer, image, 1280.0, 1024.0, samples)
}

#[test]
fn three_groups_round_trip_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let traces = vec![
        random_trace(&mut rng, "ab", "img1", true),
        random_trace(&mut rng, "ab", "img2", false),
        random_trace(&mut rng, "cd", "img1", true),
    ];
    let mut buf = Vec::new();
    write_traces(&mut buf, &traces).unwrap();
    let parsed = parse_traces(std::str::from_utf8(&buf).unwrap(), &IngestConfig::default()).unwrap();
    assert_eq!(parsed.len(), 3);
    for (a, b) in traces.iter().zip(&parsed) {
        assert_eq!((&a.observer_id, &a.image_id), (&b.observer_id, &b.image_id));
        assert_eq!(a.samples.len(), b.samples.len());
        for (s, r) in a.samples.iter().zip(&b.samples) {
            assert_eq!(s.t.to_bits(), r.t.to_bits());
            assert_eq!(s.x.to_bits(), r.x.to_bits());
            assert_eq!(s.y.to_bits(), r.y.to_bits());
            assert_eq!(s.fixation, r.fixation);
        }
        assert_eq!(a.out_of_range, b.out_of_range);
    }
}

#[test]
fn synthetic_store_round_trips_through_a_file() {
    let profile = ObserverProfile::new("obs", GpdParams::new(0.0, 0.2, 20.0).unwrap());
    let traces = generate_traces(&[profile], 4, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traces.csv");
    write_traces(std::fs::File::create(&path).unwrap(), &traces).unwrap();
    assert_eq!(parse_trace_file(&path, &IngestConfig::default()).unwrap(), traces);
}

#[test]
fn synthetic_labels_survive_resegmentation_when_respected() {
    let profile = ObserverProfile::new("obs", GpdParams::new(0.0, 0.2, 40.0).unwrap());
    for trace in generate_traces(&[profile], 3, 4).unwrap() {
        let out = segment_fixations(&trace, &SegmentationParams::default()).unwrap();
        assert_eq!(out, trace);
    }
}

proptest! {
    #[test]
    fn segmentation_is_deterministic_and_total(seed in any::<u64>(), threshold in 1.0..80.0f64, duration in 0.0..200.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = random_trace(&mut rng, "o", "i", false);
        let params = SegmentationParams { dispersion_threshold: threshold, min_duration: duration, respect_labels: true };
        let a = segment_fixations(&trace, &params).unwrap();
        prop_assert_eq!(&a, &segment_fixations(&trace, &params).unwrap());
        prop_assert!(a.is_fully_labeled());
        prop_assert_eq!(a.samples.len(), trace.samples.len());
    }
}
