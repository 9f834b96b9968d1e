use std::collections::BTreeMap;

use orb_core::eof::{fit_basis, project_function, roughness, ComponentCount, OrbCoefficients};
use orb_core::features::{FeatureConfig, Statistic};
use orb_core::pipeline::extract_all;
use orb_core::stamp::Basin;
use orb_core::trajectory::{build_trajectory, dominant_period};
use orb_oracles::scenes::diurnal_storm;

#[test]
fn pulsing_storm_cycles_daily() {
    let stamps = diurnal_storm(96, 1);
    let size: Vec<_> = extract_all(&stamps, &FeatureConfig::default())
        .into_iter()
        .map(|f| f.unwrap().get(Statistic::SIZE).clone())
        .collect();
    let curves: Vec<Vec<f64>> = size.iter().map(|f| f.values.clone()).collect();
    let basis = fit_basis(Statistic::SIZE, Basin::NAL, &size[0].thresholds, &curves, ComponentCount::Fixed(2)).unwrap();
    let coeffs: Vec<OrbCoefficients> = stamps
        .iter()
        .zip(&size)
        .map(|(s, f)| OrbCoefficients {
            storm_id: s.storm_id().into(),
            time: s.time(),
            alphas: BTreeMap::from([(Statistic::SIZE, project_function(f, &basis).unwrap())]),
        })
        .collect();
    let tr = build_trajectory(&coeffs, "AL992011", Statistic::SIZE, 0.2).unwrap();
    assert_eq!(tr.dt_hours, 1.0);
    for smoothed in [false, true] {
        let a1 = tr.component(0, smoothed);
        let period = dominant_period(&a1, tr.dt_hours).unwrap();
        assert!((22.0..=26.0).contains(&period), "period {period} (smoothed {smoothed})");
    }
    for i in 0..2 {
        assert!(roughness(&tr.component(i, true), 1.0) <= roughness(&tr.component(i, false), 1.0));
    }

    let mut csv = Vec::new();
    tr.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("time,alpha_1,alpha_2,smooth_alpha_1,smooth_alpha_2\n"));
    assert_eq!(text.lines().count(), 97);
}

#[test]
fn uneven_sampling_is_rejected() {
    let t0 = chrono::DateTime::from_timestamp(0, 0).unwrap();
    let coeffs: Vec<OrbCoefficients> = [0, 1, 2, 4]
        .iter()
        .map(|h| OrbCoefficients {
            storm_id: "X".into(),
            time: t0 + chrono::Duration::hours(*h),
            alphas: BTreeMap::from([(Statistic::SIZE, vec![*h as f64])]),
        })
        .collect();
    assert!(build_trajectory(&coeffs, "X", Statistic::SIZE, 0.2).is_err());
    assert!(build_trajectory(&coeffs[..2], "X", Statistic::SIZE, 0.2).is_err());
}
