use orb_core::dataset::{PredictorSet, ORB_COUNTS};
use orb_core::features::FeatureConfig;
use orb_core::pipeline::RunSettings;

#[test]
fn predictor_set_widths_are_fixed() {
    let widths: Vec<(&str, usize)> = PredictorSet::ALL
        .iter()
        .map(|p| (p.as_str(), p.columns(&ORB_COUNTS).len()))
        .collect();
    assert_eq!(
        widths,
        [
            ("SHIPS_only", 48),
            ("ORB_only", 68),
            ("SHIPS_plus_ORB", 116),
            ("SHIPS_plus_Persistence", 51)
        ]
    );
}

#[test]
fn dav_radii_span_50_to_400_km() {
    let cfg = FeatureConfig::default();
    for step in [0.02, 0.04, 0.07, 0.1] {
        let g = cfg.dav_grid(step);
        assert_eq!(g.first(), Some(&50.0));
        assert!((g.last().unwrap() - 400.0).abs() < 1e-9);
    }
}

#[test]
fn temperatures_sampled_every_degree() {
    let g = FeatureConfig::default().temperature_grid();
    assert_eq!(g.len(), 121);
    assert!(g.windows(2).all(|w| (w[1] - w[0] - 1.0).abs() < 1e-12));
    assert_eq!((g[0], g[120]), (-90.0, 30.0));
}

#[test]
fn resampling_defaults() {
    let s = RunSettings::default();
    assert_eq!(s.bootstrap_resamples, 250);
    assert_eq!(s.permutation_rounds, 1000);
}
