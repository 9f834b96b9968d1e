//! Random synthetic stamps covering every scene type, latitude skew, noise
//! and missing pixels.

use chrono::{Duration, TimeZone, Utc};
use orb_core::stamp::Stamp;
use orb_core::synth::{render, Scene, SceneParams, SceneSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SCENES: [Scene; 6] = [
    Scene::Uniform,
    Scene::AxisymCdo,
    Scene::EyeEyewall,
    Scene::OffsetBlob,
    Scene::HalfCold,
    Scene::Ramp,
];

/// One random scene on a 0.08° grid reaching beyond the 400 km DAV disc.
pub fn random_spec(seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = SCENES[rng.random_range(0..SCENES.len())];
    let core = rng.random_range(-95.0..-50.0);
    let cdo = rng.random_range(150.0..450.0);
    let params = SceneParams {
        background_c: rng.random_range(0.0..35.0),
        core_c: core,
        cdo_radius_km: cdo,
        eye_radius_km: rng.random_range(0.0..40.0),
        eye_temp_c: rng.random_range(core..20.0),
        offset_km: rng.random_range(0.0..150.0),
        azimuth_deg: rng.random_range(0.0..360.0),
        ramp_c_per_km: rng.random_range(-0.2..0.2),
        noise_sd_c: if rng.random_bool(0.7) { rng.random_range(0.0..3.0) } else { 0.0 },
        diurnal_amplitude_km: rng.random_range(0.0..50.0),
        diurnal_peak_hour: rng.random_range(0.0..24.0),
        missing_frac: if rng.random_bool(0.5) { rng.random_range(0.0..0.04) } else { 0.0 },
    };
    SceneSpec {
        scene,
        storm_id: format!("RND{seed}"),
        time: Utc.with_ymd_and_hms(2005, 8, 1, 0, 0, 0).unwrap() + Duration::hours(rng.random_range(0..48)),
        center_lat: rng.random_range(-35.0..35.0),
        center_lon: rng.random_range(-150.0..-20.0),
        grid_step: 0.08,
        half_width: rng.random_range(50..70),
        params,
        seed,
    }
}

pub fn random_stamp(seed: u64) -> Stamp {
    render(&random_spec(seed)).expect("random specs are valid")
}

/// Hourly stamps of a centred eye storm whose cloud shield breathes with a
/// 24-h period.
pub fn diurnal_storm(hours: usize, seed: u64) -> Vec<Stamp> {
    let t0 = Utc.with_ymd_and_hms(2011, 8, 20, 0, 0, 0).unwrap();
    let params = SceneParams {
        background_c: 26.0,
        core_c: -78.0,
        cdo_radius_km: 260.0,
        eye_radius_km: 25.0,
        eye_temp_c: 10.0,
        noise_sd_c: 0.5,
        diurnal_amplitude_km: 70.0,
        diurnal_peak_hour: 6.0,
        ..SceneParams::default()
    };
    (0..hours)
        .map(|h| {
            let mut spec = SceneSpec::new(Scene::EyeEyewall, 0.08, 60, seed.wrapping_mul(1000).wrapping_add(h as u64))
                .with_params(params);
            spec.storm_id = "AL992011".into();
            spec.center_lat = 18.0;
            spec.time = t0 + Duration::hours(h as i64);
            render(&spec).expect("valid scene")
        })
        .collect()
}
