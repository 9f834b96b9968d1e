use chrono::{Duration, TimeZone, Utc};
use orb_core::dataset::{count_events, label_rapid_change, DatasetError};
use orb_core::stamp::{apply_filter, SampleFilter};
use orb_oracles::filter::designed_track;
use orb_oracles::windows::{enumerate_labels, random_track};
use proptest::prelude::*;

#[test]
fn labels_match_window_enumeration() {
    for seed in 0..300 {
        let (times, v) = random_track(seed);
        let got = label_rapid_change(&times, &v, 25.0).unwrap();
        let (ri, rw) = enumerate_labels(&times, &v, 25.0);
        assert_eq!(got.y_ri, ri, "track {seed}");
        assert_eq!(got.y_rw, rw, "track {seed}");
    }
}

#[test]
fn threshold_is_inclusive_and_gaps_are_skipped() {
    let t0 = Utc.with_ymd_and_hms(2010, 8, 1, 0, 0, 0).unwrap();
    let times: Vec<_> = (0..6).map(|i| t0 + Duration::hours(6 * i)).collect();
    let v = [30.0, 35.0, 40.0, 50.0, 55.0, 55.0];
    let l = label_rapid_change(&times, &v, 25.0).unwrap();
    assert_eq!(l.y_ri, [true, true, true, true, true, false]);
    assert!(l.y_rw.iter().all(|y| !y));

    let mut gappy = times.clone();
    gappy.remove(2);
    let l = label_rapid_change(&gappy, &[30.0, 35.0, 50.0, 55.0, 90.0], 25.0).unwrap();
    assert!(l.y_ri.iter().all(|y| !y));
    assert_eq!(l.skipped_windows, 2);

    let mut unsorted = times.clone();
    unsorted.swap(0, 1);
    assert!(matches!(label_rapid_change(&unsorted, &v, 25.0), Err(DatasetError::Unsorted)));
}

#[test]
fn designed_landfall_track_decisions() {
    let (track, stamps, keep) = designed_track();
    let kept: Vec<usize> = apply_filter(&track, &stamps, &SampleFilter::default())
        .iter()
        .map(|(p, _)| track.iter().position(|q| q.time == p.time).unwrap())
        .collect();
    assert_eq!(kept, keep);
}

proptest! {
    #[test]
    fn weakening_mirrors_intensification(seed in 0u64..10_000) {
        let (times, v) = random_track(seed);
        let neg: Vec<f64> = v.iter().map(|x| 200.0 - x).collect();
        let a = label_rapid_change(&times, &v, 25.0).unwrap();
        let b = label_rapid_change(&times, &neg, 25.0).unwrap();
        prop_assert_eq!(&a.y_ri, &b.y_rw);
        prop_assert_eq!(&a.y_rw, &b.y_ri);
    }

    #[test]
    fn higher_thresholds_label_fewer(seed in 0u64..10_000, lo in 5.0f64..30.0, extra in 0.0f64..30.0) {
        let (times, v) = random_track(seed);
        let a = label_rapid_change(&times, &v, lo).unwrap();
        let b = label_rapid_change(&times, &v, lo + extra).unwrap();
        prop_assert!(a.y_ri.iter().zip(&b.y_ri).all(|(x, y)| *x || !*y));
        prop_assert!(count_events(&b.y_ri) <= a.y_ri.iter().filter(|y| **y).count());
    }
}
