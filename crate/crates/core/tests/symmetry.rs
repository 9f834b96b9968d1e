use orb_core::features::{
    bulk_morphology, dav, extract_features, radial_profile, FeatureConfig, OrbFunction, Statistic, StormCenter,
};
use orb_core::synth::{render, truth, Scene, SceneParams, SceneSpec};
use orb_oracles::scenes::random_stamp;

fn axisym(step: f64, half_width: usize, cdo: f64, core: f64, bg: f64) -> SceneSpec {
    SceneSpec::new(Scene::AxisymCdo, step, half_width, 0).with_params(SceneParams {
        core_c: core,
        background_c: bg,
        cdo_radius_km: cdo,
        ..SceneParams::default()
    })
}

#[test]
fn axisymmetric_scenes_have_zero_dav() {
    let cfg = FeatureConfig::default();
    for (step, hw, cdo, core, bg) in [
        (0.04, 100, 450.0, -80.0, 25.0),
        (0.08, 60, 700.0, -90.0, 10.0),
        (0.1, 45, 420.0, -60.0, 28.5),
        (0.05, 90, 1200.0, -75.3, 22.1),
    ] {
        let spec = axisym(step, hw, cdo, core, bg);
        assert_eq!(truth(&spec, &cfg).dav, Some(0.0));
        let stamp = render(&spec).unwrap();
        let f = extract_features(&stamp, &cfg).unwrap();
        assert_eq!((f.center.row, f.center.col), (hw as f64, hw as f64));
        let d = f.get(Statistic::DAV);
        assert!(d.values.iter().all(|&v| v == 0.0), "step {step}: {:?}", d.values);
    }
}

#[test]
fn centred_disks_are_round_and_unskewed() {
    let cfg = FeatureConfig::default();
    for (lat, radius) in [(0.0, 100.0), (0.0, 333.0), (15.0, 150.0), (-25.0, 260.0), (30.0, 420.0)] {
        let mut spec = SceneSpec::new(Scene::OffsetBlob, 0.08, 70, 0).with_params(SceneParams {
            core_c: -70.0,
            background_c: 20.0,
            cdo_radius_km: radius,
            offset_km: 0.0,
            ..SceneParams::default()
        });
        spec.center_lat = lat;
        let stamp = render(&spec).unwrap();
        let b = bulk_morphology(&stamp, &StormCenter::best_track(&stamp), &cfg).unwrap();
        let mut checked = 0;
        for (k, &c) in b.skew.thresholds.iter().enumerate() {
            if !(-70.0..20.0).contains(&c) {
                continue;
            }
            assert!(b.skew.defined[k] && b.skew.values[k] <= 0.02, "lat {lat} r {radius}: SKEW {}", b.skew.values[k]);
            assert!(b.ecc.defined[k] && b.ecc.values[k] <= 0.02, "lat {lat} r {radius}: ECC {}", b.ecc.values[k]);
            checked += 1;
        }
        assert_eq!(checked, 90);
    }
}

fn assert_shifted(a: &OrbFunction, b: &OrbFunction, shift: usize) {
    let n = a.len();
    for k in 0..n - shift {
        assert_eq!(a.defined[k], b.defined[k + shift], "{} at {}", a.statistic, a.thresholds[k]);
        if a.defined[k] {
            assert!((a.values[k] - b.values[k + shift]).abs() <= 1e-10, "{}", a.statistic);
        }
    }
}

#[test]
fn temperature_offset_only_moves_profiles() {
    let cfg = FeatureConfig::default();
    for seed in 0..12 {
        // quantise so the offset is exact in f32
        let base = random_stamp(seed).map_tb(|v| ((v * 1024.0).round() / 1024.0).clamp(-100.0, 50.0)).unwrap();
        let delta = 3.0;
        let moved = base.map_tb(|v| v + delta as f32).unwrap();
        let centre = StormCenter::best_track(&base);

        let (ra, rb) = (radial_profile(&base, &centre, &cfg).unwrap(), radial_profile(&moved, &centre, &cfg).unwrap());
        for k in 0..ra.len() {
            assert!((rb.values[k] - ra.values[k] - delta).abs() <= 1e-10);
        }

        let (ba, bb) = (bulk_morphology(&base, &centre, &cfg).unwrap(), bulk_morphology(&moved, &centre, &cfg).unwrap());
        // L'(c + 3) = L(c) and the grid has 1 °C steps
        assert_shifted(&ba.size, &bb.size, 3);
        assert_shifted(&ba.skew, &bb.skew, 3);
        assert_shifted(&ba.shape, &bb.shape, 3);
        assert_shifted(&ba.ecc, &bb.ecc, 3);

        match (dav(&base, &centre, &cfg), dav(&moved, &centre, &cfg)) {
            (Ok(a), Ok(b)) => assert!(a.values.iter().zip(&b.values).all(|(x, y)| (x - y).abs() <= 1e-10)),
            (Err(_), Err(_)) => {}
            _ => panic!("offset changed DAV definedness"),
        }
    }
}
