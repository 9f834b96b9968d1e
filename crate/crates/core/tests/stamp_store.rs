use orb_core::features::{bulk_morphology, dav, radial_profile, FeatureConfig, StormCenter};
use orb_core::stamp::{decode_stamp, encode_stamp, read_stamp, stamp_file_name, write_stamp, Stamp};
use orb_core::synth::render;
use orb_oracles::scenes::{random_spec, random_stamp};
use proptest::prelude::*;

fn same_pixels(a: &Stamp, b: &Stamp) -> bool {
    a.mask() == b.mask()
        && a.tb().iter().zip(b.tb()).zip(a.mask()).all(|((x, y), m)| *m || x.to_bits() == y.to_bits())
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..5 {
        let s = random_stamp(seed);
        let path = dir.path().join(stamp_file_name(s.storm_id(), &s.time()));
        write_stamp(&s, &path).unwrap();
        let back = read_stamp(&path).unwrap();
        assert!(same_pixels(&s, &back));
        assert_eq!((back.storm_id(), back.time()), (s.storm_id(), s.time()));
        assert_eq!((back.center_lat(), back.grid_step()), (s.center_lat(), s.grid_step()));
    }
    assert!(read_stamp(dir.path().join("missing.stamp")).is_err());
}

#[test]
fn truncated_bytes_are_rejected() {
    let bytes = encode_stamp(&random_stamp(3));
    for cut in [0, 7, bytes.len() / 2, bytes.len() - 1] {
        assert!(decode_stamp(&bytes[..cut]).is_err(), "cut at {cut}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn encoding_is_lossless(seed in any::<u64>()) {
        let s = random_stamp(seed);
        let bytes = encode_stamp(&s);
        let back = decode_stamp(&bytes).unwrap();
        prop_assert!(same_pixels(&s, &back));
        prop_assert_eq!(encode_stamp(&back), bytes);
    }

    #[test]
    fn quarter_turns_rotate_features(seed in any::<u64>()) {
        let mut spec = random_spec(seed);
        // square pixels make the rotation exact
        spec.center_lat = 0.0;
        let s = render(&spec).unwrap();
        let r = s.rotated_cw();
        let cfg = FeatureConfig::default();
        let (cs, cr) = (StormCenter::best_track(&s), StormCenter::best_track(&r));
        let (a, b) = (bulk_morphology(&s, &cs, &cfg).unwrap(), bulk_morphology(&r, &cr, &cfg).unwrap());
        prop_assert_eq!(&a.size.values, &b.size.values);
        prop_assert_eq!(&a.shape.values, &b.shape.values);
        prop_assert_eq!(&a.skew.defined, &b.skew.defined);
        for k in 0..a.ecc.len() {
            prop_assert!((a.ecc.values[k] - b.ecc.values[k]).abs() < 1e-9);
            prop_assert!((a.skew.values[k] - b.skew.values[k]).abs() < 1e-12);
            if a.skew.defined[k] && a.skew.values[k] > 1e-9 {
                let (da, db) = (a.skew.skew_direction.as_ref().unwrap()[k], b.skew.skew_direction.as_ref().unwrap()[k]);
                let turn = (db - da).rem_euclid(std::f64::consts::TAU);
                prop_assert!((turn - std::f64::consts::FRAC_PI_2).abs() < 1e-9, "turn {}", turn);
            }
        }
        prop_assert_eq!(radial_profile(&s, &cs, &cfg).unwrap().values, radial_profile(&r, &cr, &cfg).unwrap().values);
        match (dav(&s, &cs, &cfg), dav(&r, &cr, &cfg)) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x.values, y.values),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "rotation changed DAV definedness"),
        }
    }
}
