//! Synthetic stamps, tracks and predictor tables with known ground truth.
//!
//! Scenes are geometric: a background temperature with a cold cloud shield
//! whose shape depends on the scene type. Truth records are computed from the
//! continuous scene, not from the raster.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{DateTime, Datelike, Duration, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{label_rapid_change, Dataset, LabeledObservation, ShipsTable, Split, SHIPS_ENV};
use crate::features::FeatureConfig;
use crate::stamp::{Basin, GridFrame, Stamp, StampError, TrackPoint, TB_MAX_C, TB_MIN_C};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene parameter `{name}` = {value} out of bounds: {reason}")]
    OutOfBounds {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("need at least 10 storms, got {0}")]
    TooFewStorms(usize),
    #[error(transparent)]
    Stamp(#[from] StampError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scene {
    Uniform,
    /// Cold core warming quadratically with radius up to the CDO edge.
    AxisymCdo,
    /// Warm eye, cold eyewall, quadratic warming out to the CDO edge.
    EyeEyewall,
    /// Hard-edged cold disc displaced from the stamp centre.
    OffsetBlob,
    /// One half-plane cold, the other warm.
    HalfCold,
    /// Linear temperature ramp.
    Ramp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub background_c: f64,
    pub core_c: f64,
    /// Radius where the cloud shield meets the background (blob radius for
    /// `offset_blob`).
    pub cdo_radius_km: f64,
    pub eye_radius_km: f64,
    pub eye_temp_c: f64,
    /// Displacement of the storm structure from the stamp centre.
    pub offset_km: f64,
    /// Compass direction of the offset, of the cold half, or of increasing
    /// temperature for a ramp.
    pub azimuth_deg: f64,
    pub ramp_c_per_km: f64,
    pub noise_sd_c: f64,
    /// Amplitude of the 24-h oscillation of the CDO radius.
    pub diurnal_amplitude_km: f64,
    /// UTC hour of the CDO radius maximum.
    pub diurnal_peak_hour: f64,
    pub missing_frac: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            background_c: 25.0,
            core_c: -80.0,
            cdo_radius_km: 450.0,
            eye_radius_km: 20.0,
            eye_temp_c: 15.0,
            offset_km: 0.0,
            azimuth_deg: 270.0,
            ramp_c_per_km: 0.1,
            noise_sd_c: 0.0,
            diurnal_amplitude_km: 0.0,
            diurnal_peak_hour: 18.0,
            missing_frac: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene: Scene,
    pub storm_id: String,
    pub time: DateTime<Utc>,
    pub center_lat: f64,
    pub center_lon: f64,
    pub grid_step: f64,
    pub half_width: usize,
    pub params: SceneParams,
    pub seed: u64,
}

impl SceneSpec {
    /// A scene at the equator, where pixels are square.
    pub fn new(scene: Scene, grid_step: f64, half_width: usize, seed: u64) -> SceneSpec {
        SceneSpec {
            scene,
            storm_id: "SYN01".into(),
            time: Utc.with_ymd_and_hms(2010, 1, 1, 0, 0, 0).unwrap(),
            center_lat: 0.0,
            center_lon: -60.0,
            grid_step,
            half_width,
            params: SceneParams::default(),
            seed,
        }
    }

    pub fn with_params(mut self, params: SceneParams) -> SceneSpec {
        self.params = params;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let p = &self.params;
        let oob = |name, value, reason| Err(SynthError::OutOfBounds { name, value, reason });
        let temp_ok = |t: f64| t.is_finite() && (TB_MIN_C as f64..=TB_MAX_C as f64).contains(&t);
        for (name, v) in [
            ("background_c", p.background_c),
            ("core_c", p.core_c),
            ("eye_temp_c", p.eye_temp_c),
        ] {
            if !temp_ok(v) {
                return oob(name, v, "temperature outside the valid brightness range");
            }
        }
        if p.core_c >= p.background_c {
            return oob("core_c", p.core_c, "core must be colder than the background");
        }
        if !(p.cdo_radius_km > 0.0 && p.cdo_radius_km <= 5000.0) {
            return oob("cdo_radius_km", p.cdo_radius_km, "must lie in (0, 5000]");
        }
        if !(p.eye_radius_km >= 0.0 && p.eye_radius_km < p.cdo_radius_km) {
            return oob("eye_radius_km", p.eye_radius_km, "must be non-negative and inside the CDO");
        }
        if !(p.diurnal_amplitude_km >= 0.0 && p.diurnal_amplitude_km < p.cdo_radius_km - p.eye_radius_km) {
            return oob("diurnal_amplitude_km", p.diurnal_amplitude_km, "must keep the CDO edge outside the eye");
        }
        if !(p.offset_km >= 0.0 && p.offset_km.is_finite()) {
            return oob("offset_km", p.offset_km, "must be non-negative");
        }
        if !p.azimuth_deg.is_finite() {
            return oob("azimuth_deg", p.azimuth_deg, "must be finite");
        }
        if !(p.ramp_c_per_km.abs() <= 10.0) {
            return oob("ramp_c_per_km", p.ramp_c_per_km, "must lie in [-10, 10]");
        }
        if !(0.0..=20.0).contains(&p.noise_sd_c) {
            return oob("noise_sd_c", p.noise_sd_c, "must lie in [0, 20]");
        }
        if !(0.0..1.0).contains(&p.missing_frac) {
            return oob("missing_frac", p.missing_frac, "must lie in [0, 1)");
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return oob("grid_step", self.grid_step, "must lie in (0, 1]");
        }
        if self.half_width == 0 || self.half_width > 2000 {
            return oob("half_width", self.half_width as f64, "must lie in [1, 2000]");
        }
        if self.center_lat.abs() >= 60.0 {
            return oob("center_lat", self.center_lat, "synthetic storms stay equatorward of 60°");
        }
        Ok(())
    }

    /// CDO radius at this scene's time, including the diurnal oscillation.
    pub fn cdo_radius(&self) -> f64 {
        let p = &self.params;
        let hour = self.time.hour() as f64 + self.time.minute() as f64 / 60.0;
        p.cdo_radius_km + p.diurnal_amplitude_km * (2.0 * PI * (hour - p.diurnal_peak_hour) / 24.0).cos()
    }

    /// Unit vector of the azimuth, with rounding residue at the cardinal
    /// directions snapped to zero so dividing lines fall on pixel centres.
    fn azimuth_unit(&self) -> (f64, f64) {
        let a = self.params.azimuth_deg.to_radians();
        let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
        (snap(a.sin()), snap(a.cos()))
    }

    fn structure_center(&self) -> (f64, f64) {
        let (ux, uy) = self.azimuth_unit();
        (self.params.offset_km * ux, self.params.offset_km * uy)
    }

    /// Temperature of the continuous scene at an east/north offset in km.
    pub fn temperature(&self, x: f64, y: f64) -> f64 {
        let p = &self.params;
        let (bg, core) = (p.background_c, p.core_c);
        match self.scene {
            Scene::Uniform => bg,
            Scene::AxisymCdo => {
                let r = x.hypot(y) / self.cdo_radius();
                (core + (bg - core) * r * r).min(bg)
            }
            Scene::EyeEyewall => {
                let (cx, cy) = self.structure_center();
                let r = (x - cx).hypot(y - cy);
                eye_profile(r, p.eye_radius_km, self.cdo_radius(), p.eye_temp_c, core, bg)
            }
            Scene::OffsetBlob => {
                let (cx, cy) = self.structure_center();
                if (x - cx).hypot(y - cy) <= self.cdo_radius() {
                    core
                } else {
                    bg
                }
            }
            Scene::HalfCold => {
                let (ux, uy) = self.azimuth_unit();
                if x * ux + y * uy > 0.0 {
                    core
                } else {
                    bg
                }
            }
            Scene::Ramp => {
                let (ux, uy) = self.azimuth_unit();
                let mid = 0.5 * (core + bg);
                (mid + p.ramp_c_per_km * (x * ux + y * uy)).clamp(TB_MIN_C as f64, TB_MAX_C as f64)
            }
        }
    }
}

fn eye_profile(r: f64, r_eye: f64, r_cdo: f64, eye: f64, core: f64, bg: f64) -> f64 {
    if r < r_eye {
        eye
    } else if r < r_cdo {
        let s = (r - r_eye) / (r_cdo - r_eye);
        core + (bg - core) * s * s
    } else {
        bg
    }
}

/// Rounds to a multiple of 2^-16 so products with small integers stay exact in f32.
fn dyadic(v: f64) -> f64 {
    (v * 65536.0).round() / 65536.0
}

/// Core temperature and per-pixel² curvature of the axisymmetric scene as
/// rendered on square pixels.
fn axisym_quantised(spec: &SceneSpec, frame: &GridFrame) -> (f64, f64) {
    let p = &spec.params;
    let r_pix = spec.cdo_radius() / frame.dy_km;
    (dyadic(p.core_c), dyadic((p.background_c - p.core_c) / (r_pix * r_pix)))
}

/// Rasterises the scene. Pixel values are the scene at pixel centres, plus
/// seeded Gaussian noise; pixels are masked independently with
/// `missing_frac`.
///
/// With square pixels (equator) the axisymmetric scene is built from integer
/// pixel offsets and dyadic coefficients, so it is exactly radially
/// symmetric in `f32`.
pub fn render(spec: &SceneSpec) -> Result<Stamp, SynthError> {
    spec.validate()?;
    let frame = GridFrame::new(spec.center_lat, spec.grid_step, spec.half_width)?;
    let n = spec.half_width as f64;
    let side = frame.side();
    let p = &spec.params;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, p.noise_sd_c).expect("validated sd");

    let square = frame.dx_km == frame.dy_km;
    let (core_q, k_q) = axisym_quantised(spec, &frame);

    let mut tb = Vec::with_capacity(side * side);
    let mut mask = Vec::with_capacity(side * side);
    for row in 0..side {
        for col in 0..side {
            let v = if spec.scene == Scene::AxisymCdo && square {
                let (di, dj) = (row as f64 - n, col as f64 - n);
                (core_q + k_q * (di * di + dj * dj)).min(dyadic(p.background_c))
            } else {
                let (x, y) = frame.offset_km(row, col, n, n);
                spec.temperature(x, y)
            };
            let v = if p.noise_sd_c > 0.0 { v + noise.sample(&mut rng) } else { v };
            tb.push(v.clamp(TB_MIN_C as f64, TB_MAX_C as f64) as f32);
            mask.push(p.missing_frac > 0.0 && rng.random::<f64>() < p.missing_frac);
        }
    }
    Ok(Stamp::new(
        spec.storm_id.clone(),
        spec.time,
        spec.center_lat,
        spec.center_lon,
        spec.grid_step,
        spec.half_width,
        tb,
        mask,
    )?)
}

// ---------------------------------------------------------------------------
// Truth
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewTruth {
    pub magnitude: f64,
    /// Compass azimuth, radians.
    pub direction_rad: f64,
    /// Thresholds `c` with `lo <= c < hi` have this SKEW.
    pub valid_from_c: f64,
    pub valid_to_c: f64,
}

/// Analytic values of the continuous scene.
///
/// Discretisation tolerances: raster SIZE differs from `size` by about one
/// pixel per boundary pixel; raster RAD differs from `profile` by up to the
/// temperature change across one pixel; DAV on a ramp approaches 2700 deg²
/// only as the grid refines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SynthTruth {
    /// DAV, the same at every radius.
    pub dav: Option<f64>,
    /// Level-set area (km²) on the temperature grid.
    pub size: Option<Vec<f64>>,
    /// Annulus-mean temperature on the RAD grid; `NaN` where the annulus
    /// leaves the stamp's inscribed circle.
    pub profile: Option<Vec<f64>>,
    pub skew: Option<SkewTruth>,
}

/// Composite Simpson rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Area of the disc of radius `r` centred in the square `[-l, l]^2`.
fn disc_in_square(r: f64, l: f64) -> f64 {
    if r <= l {
        return PI * r * r;
    }
    if r >= l * 2f64.sqrt() {
        return 4.0 * l * l;
    }
    // quarter: integrate the clipped chord height over x in [0, l]
    let kink = (r * r - l * l).sqrt();
    let h = |x: f64| (r * r - x * x).max(0.0).sqrt().min(l);
    4.0 * (kink * l + simpson(h, kink, l, 2000))
}

/// Mean over the annulus `[a, b)` of a radial function, area-weighted.
fn annulus_mean(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    simpson(|r| f(r) * r, a, b, 400) / (0.5 * (b * b - a * a))
}

pub fn truth(spec: &SceneSpec, cfg: &FeatureConfig) -> SynthTruth {
    let frame = match GridFrame::new(spec.center_lat, spec.grid_step, spec.half_width) {
        Ok(f) => f,
        Err(_) => return SynthTruth::default(),
    };
    let p = &spec.params;
    let (bg, core) = (p.background_c, p.core_c);
    // the raster covers pixel cells out to half a pixel beyond the last centre
    let lx = (spec.half_width as f64 + 0.5) * frame.dx_km;
    let ly = (spec.half_width as f64 + 0.5) * frame.dy_km;
    let inscribed = lx.min(ly);
    let full = 4.0 * lx * ly;
    let temps = cfg.temperature_grid();
    let radii = cfg.rad_grid(spec.grid_step);
    let step = radii[1] - radii[0];
    let r_cdo = spec.cdo_radius();
    let radial_profile = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        radii
            .iter()
            .map(|&a| if a + step <= inscribed { annulus_mean(f, a, a + step) } else { f64::NAN })
            .collect()
    };
    let (ux, uy) = spec.azimuth_unit();
    let az = crate::stamp::compass_azimuth(ux, uy);

    match spec.scene {
        Scene::Uniform => SynthTruth {
            dav: None,
            size: Some(temps.iter().map(|&c| if c >= bg { full } else { 0.0 }).collect()),
            profile: Some(radial_profile(&|_| bg)),
            skew: None,
        },
        Scene::AxisymCdo => {
            let square = lx == ly;
            // square pixels render with quantised coefficients
            let (core_e, k_e, bg_e) = if square {
                let (c, k) = axisym_quantised(spec, &frame);
                (c, k / (frame.dy_km * frame.dy_km), dyadic(bg))
            } else {
                (core, (bg - core) / (r_cdo * r_cdo), bg)
            };
            let f = |r: f64| (core_e + k_e * r * r).min(bg_e);
            let size = temps
                .iter()
                .map(|&c| {
                    if c < core_e {
                        0.0
                    } else if c >= bg_e {
                        full
                    } else if square {
                        disc_in_square(((c - core_e) / k_e).sqrt(), lx)
                    } else {
                        f64::NAN
                    }
                })
                .collect();
            SynthTruth {
                // the plateau edge must stay outside every gradient stencil in the disc
                dav: (square && r_cdo > cfg.dav_max_radius_km + 2f64.sqrt() * frame.dy_km).then_some(0.0),
                size: Some(size),
                profile: Some(radial_profile(&f)),
                skew: None,
            }
        }
        Scene::EyeEyewall => {
            let centred = p.offset_km == 0.0;
            let f = |r: f64| eye_profile(r, p.eye_radius_km, r_cdo, p.eye_temp_c, core, bg);
            let size = temps
                .iter()
                .map(|&c| {
                    if c < core {
                        return 0.0;
                    }
                    if c >= bg {
                        return full;
                    }
                    let rc = p.eye_radius_km + (r_cdo - p.eye_radius_km) * ((c - core) / (bg - core)).sqrt();
                    let eye = if c >= p.eye_temp_c { 0.0 } else { PI * p.eye_radius_km.powi(2) };
                    if rc + p.offset_km <= inscribed {
                        PI * rc * rc - eye
                    } else {
                        f64::NAN
                    }
                })
                .collect();
            SynthTruth {
                dav: None,
                size: Some(size),
                profile: centred.then(|| radial_profile(&f)),
                skew: None,
            }
        }
        Scene::OffsetBlob => {
            let (d, a) = (p.offset_km, r_cdo);
            let inside = d + a <= inscribed;
            // mean distance from the stamp centre over the disc, in polar
            // coordinates about the disc centre
            let mean_dist = simpson(
                |rho| {
                    rho * simpson(|phi| (d * d + rho * rho + 2.0 * d * rho * phi.cos()).sqrt(), 0.0, 2.0 * PI, 256)
                },
                0.0,
                a,
                256,
            ) / (PI * a * a);
            SynthTruth {
                dav: None,
                size: inside.then(|| {
                    temps
                        .iter()
                        .map(|&c| if c < core { 0.0 } else if c >= bg { full } else { PI * a * a })
                        .collect()
                }),
                profile: None,
                skew: (inside && d > 0.0).then(|| SkewTruth {
                    magnitude: (d / mean_dist).min(1.0),
                    direction_rad: az,
                    valid_from_c: core,
                    valid_to_c: bg,
                }),
            }
        }
        Scene::HalfCold => {
            // centroid of a half square sits l/2 from the centre; the mean
            // distance over a square of half-side l is l (sqrt2 + asinh 1) / 3
            let cardinal = (p.azimuth_deg.rem_euclid(90.0)).abs() < 1e-12 && lx == ly;
            let mean_dist = lx * (2f64.sqrt() + 1f64.asinh()) / 3.0;
            SynthTruth {
                dav: None,
                size: Some(
                    temps
                        .iter()
                        .map(|&c| if c < core { 0.0 } else if c >= bg { full } else { 0.5 * full })
                        .collect(),
                ),
                profile: Some(radial_profile(&|_| 0.5 * (core + bg))),
                skew: cardinal.then(|| SkewTruth {
                    magnitude: 0.5 * lx / mean_dist,
                    direction_rad: az,
                    valid_from_c: core,
                    valid_to_c: bg,
                }),
            }
        }
        Scene::Ramp => {
            let mid = 0.5 * (core + bg);
            let unclamped = mid + p.ramp_c_per_km.abs() * cfg.dav_max_radius_km * 2f64.sqrt()
                <= TB_MAX_C as f64
                && mid - p.ramp_c_per_km.abs() * cfg.dav_max_radius_km * 2f64.sqrt() >= TB_MIN_C as f64;
            SynthTruth {
                // folded angles are uniform on (-90, 90]
                dav: (unclamped && p.ramp_c_per_km != 0.0).then_some(180.0 * 180.0 / 12.0),
                size: None,
                profile: Some(radial_profile(&|_| mid)),
                skew: None,
            }
        }
    }
}

/// Renders a stamp and its truth record on the default feature grids.
pub fn make_stamp(spec: &SceneSpec) -> Result<(Stamp, SynthTruth), SynthError> {
    let stamp = render(spec)?;
    Ok((stamp, truth(spec, &FeatureConfig::default())))
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Structure and environment independent of the labels.
    Null,
    /// Generic 50-column table with labels from a 5-sparse logistic model.
    SparseSignal,
    /// Eye formation accompanies rapid intensification; environment is noise.
    StructureDriven,
    /// Structure and one environmental column each carry part of the signal.
    Complementary,
}

impl std::str::FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "null" => Ok(Scenario::Null),
            "sparse_signal" => Ok(Scenario::SparseSignal),
            "structure_driven" => Ok(Scenario::StructureDriven),
            "complementary" => Ok(Scenario::Complementary),
            _ => Err(format!(
                "unknown scenario `{s}` (expected null, sparse_signal, structure_driven or complementary)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetOptions {
    pub grid_step: f64,
    pub half_width: usize,
    pub basin: Basin,
    pub noise_sd_c: f64,
    /// Probability that a scene is organised, given the point's label.
    pub organised_if_positive: f64,
    pub organised_if_negative: f64,
    /// Shear reduction (kt) during rapid intensification, complementary only.
    pub shear_signal: f64,
    /// Rows and columns of the generic sparse-signal table.
    pub sparse_rows: usize,
    pub sparse_cols: usize,
}

impl DatasetOptions {
    /// Defaults tuned per scenario. The complementary scenario weakens the
    /// structural signal so neither source alone separates the classes.
    pub fn for_scenario(scenario: Scenario) -> DatasetOptions {
        match scenario {
            Scenario::Complementary => DatasetOptions {
                organised_if_positive: 0.75,
                organised_if_negative: 0.25,
                shear_signal: 2.0,
                ..DatasetOptions::default()
            },
            _ => DatasetOptions::default(),
        }
    }
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            grid_step: 0.08,
            half_width: 90,
            basin: Basin::NAL,
            noise_sd_c: 0.5,
            organised_if_positive: 0.85,
            organised_if_negative: 0.15,
            shear_signal: 5.0,
            sparse_rows: 2000,
            sparse_cols: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DatasetTruth {
    /// True logistic coefficients by column (sparse-signal only).
    pub beta: BTreeMap<String, f64>,
    pub intercept: Option<f64>,
    /// Per 6-hourly track point: was the scene organised around an eye.
    pub organised: Vec<bool>,
    pub y_ri: Vec<bool>,
    pub y_rw: Vec<bool>,
    pub notes: String,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub scenario: Scenario,
    pub seed: u64,
    pub track: Vec<TrackPoint>,
    pub ships: ShipsTable,
    /// One scene per track point, rendered on demand.
    pub scenes: Vec<SceneSpec>,
    pub truth: DatasetTruth,
    /// Ready-made table for the generic sparse-signal scenario.
    pub table: Option<Dataset>,
}

impl SynthDataset {
    pub fn render_all(&self) -> Result<Vec<Stamp>, SynthError> {
        use rayon::prelude::*;
        self.scenes.par_iter().map(render).collect()
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// 6-hourly intensities with 0-2 rapid-intensification bursts and an
/// optional late rapid weakening.
fn intensity_path(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut steps: Vec<f64> = (0..len - 1).map(|_| rng.random_range(-3.0..5.0)).collect();
    let bursts = rng.random_range(0..3usize);
    for _ in 0..bursts {
        let dur = rng.random_range(4..7usize);
        if len - 1 > dur + 4 {
            let start = rng.random_range(2..len - 1 - dur);
            for s in &mut steps[start..start + dur] {
                *s = rng.random_range(7.0..10.0);
            }
        }
    }
    if rng.random::<f64>() < 0.4 {
        let dur = rng.random_range(4..6usize);
        let start = len - 1 - dur;
        for s in &mut steps[start..] {
            *s = rng.random_range(-10.0..-7.0);
        }
    }
    let mut v = vec![rng.random_range(30.0..45.0)];
    for s in steps {
        let next = (v.last().unwrap() + s).clamp(20.0, 165.0);
        v.push(next.round());
    }
    v
}

fn organised_scene(rng: &mut ChaCha8Rng, base: SceneParams) -> (Scene, SceneParams) {
    let p = SceneParams {
        core_c: rng.random_range(-85.0..-72.0),
        eye_radius_km: rng.random_range(15.0..35.0),
        eye_temp_c: rng.random_range(0.0..20.0),
        cdo_radius_km: rng.random_range(220.0..320.0),
        ..base
    };
    (Scene::EyeEyewall, p)
}

fn disorganised_scene(rng: &mut ChaCha8Rng, base: SceneParams) -> (Scene, SceneParams) {
    let az = rng.random_range(0.0..360.0);
    if rng.random::<f64>() < 0.6 {
        let p = SceneParams {
            core_c: rng.random_range(-70.0..-50.0),
            cdo_radius_km: rng.random_range(100.0..220.0),
            offset_km: rng.random_range(60.0..180.0),
            azimuth_deg: az,
            ..base
        };
        (Scene::OffsetBlob, p)
    } else {
        let p = SceneParams {
            core_c: rng.random_range(-70.0..-55.0),
            cdo_radius_km: rng.random_range(250.0..400.0),
            eye_radius_km: 0.0,
            eye_temp_c: -60.0,
            offset_km: rng.random_range(40.0..120.0),
            azimuth_deg: az,
            ..base
        };
        (Scene::EyeEyewall, p)
    }
}

/// Synthetic pipeline inputs with known truth.
///
/// Storms start between 1998 and 2016, so the default 2010 split puts about
/// two thirds of them in training.
pub fn make_dataset(n_storms: usize, scenario: Scenario, seed: u64, opts: &DatasetOptions) -> Result<SynthDataset, SynthError> {
    if n_storms < 10 {
        return Err(SynthError::TooFewStorms(n_storms));
    }
    if scenario == Scenario::SparseSignal {
        return Ok(sparse_signal(n_storms, seed, opts));
    }
    let mut track = Vec::new();
    let mut scenes = Vec::new();
    let mut ships = ShipsTable {
        columns: SHIPS_ENV.iter().map(|s| s.to_string()).collect(),
        rows: BTreeMap::new(),
    };
    let mut truth = DatasetTruth {
        notes: match scenario {
            Scenario::Null => "scene organisation and environment are independent of the labels".into(),
            Scenario::StructureDriven => format!(
                "scenes are organised with probability {} at RI-labelled points and {} elsewhere; environment is noise",
                opts.organised_if_positive, opts.organised_if_negative
            ),
            Scenario::Complementary => format!(
                "scenes are organised with probability {} at RI-labelled points and {} elsewhere; SHRD drops by {} kt at RI-labelled points",
                opts.organised_if_positive, opts.organised_if_negative, opts.shear_signal
            ),
            Scenario::SparseSignal => unreachable!(),
        },
        ..Default::default()
    };
    let ships_mean = [12.0, 15.0, 10.0, 60.0, 28.0, 70.0, 60.0, 50.0, 120.0, -2.0];
    let ships_sd = [5.0, 6.0, 4.0, 25.0, 1.0, 8.0, 10.0, 10.0, 20.0, 6.0];

    for s in 0..n_storms {
        let mut rng = rng_for(seed, s as u64);
        let year = 1998 + (s * 19 / n_storms) as i32;
        let storm_id = format!("AL{:02}{}", s % 100 + 1, year);
        let start = Utc.with_ymd_and_hms(year, 7, 1, 0, 0, 0).unwrap()
            + Duration::hours(6 * rng.random_range(0..360i64));
        let len = rng.random_range(24..36usize);
        let vmax = intensity_path(&mut rng, len);
        let times: Vec<DateTime<Utc>> = (0..len).map(|i| start + Duration::hours(6 * i as i64)).collect();
        let labels = label_rapid_change(&times, &vmax, 25.0).expect("increasing times");
        let landfall = rng.random::<f64>() < 0.2;
        let (mut lat, mut lon) = (rng.random_range(12.0..20.0), rng.random_range(-60.0..-40.0));
        let mut env: Vec<f64> = (0..SHIPS_ENV.len()).map(|_| rng.random_range(-1.0..1.0)).collect();

        for i in 0..len {
            let y = labels.y_ri[i];
            let land = if landfall && i + 8 >= len { 150.0 * (len - 1 - i) as f64 } else { 1500.0 };
            track.push(TrackPoint {
                storm_id: storm_id.clone(),
                time: times[i],
                lat,
                lon,
                intensity: vmax[i],
                dist_to_land: land,
                basin: opts.basin,
            });

            let p_org = match scenario {
                Scenario::Null => 0.5,
                _ if y => opts.organised_if_positive,
                _ => opts.organised_if_negative,
            };
            let organised = rng.random::<f64>() < p_org;
            let base = SceneParams {
                noise_sd_c: opts.noise_sd_c,
                ..SceneParams::default()
            };
            let (scene, params) = if organised {
                organised_scene(&mut rng, base)
            } else {
                disorganised_scene(&mut rng, base)
            };
            scenes.push(SceneSpec {
                scene,
                storm_id: storm_id.clone(),
                time: times[i],
                center_lat: lat,
                center_lon: lon,
                grid_step: opts.grid_step,
                half_width: opts.half_width,
                params,
                seed: seed.wrapping_mul(1_000_003).wrapping_add((s * 1000 + i) as u64),
            });
            truth.organised.push(organised);
            truth.y_ri.push(y);
            truth.y_rw.push(labels.y_rw[i]);

            // AR(1) environment in standard units
            for e in env.iter_mut() {
                *e = 0.8 * *e + 0.6 * rng.random_range(-1.0..1.0) * 3f64.sqrt() * 0.6;
            }
            let mut vals: Vec<Option<f64>> = env
                .iter()
                .zip(ships_mean.iter().zip(&ships_sd))
                .map(|(e, (m, sd))| Some(m + sd * e))
                .collect();
            if scenario == Scenario::Complementary && y {
                vals[0] = vals[0].map(|v| v - opts.shear_signal);
            }
            ships.rows.insert((storm_id.clone(), times[i]), vals);

            lat += rng.random_range(0.1..0.3);
            lon -= rng.random_range(0.3..0.7);
        }
    }
    Ok(SynthDataset {
        scenario,
        seed,
        track,
        ships,
        scenes,
        truth,
        table: None,
    })
}

fn sparse_signal(n_storms: usize, seed: u64, opts: &DatasetOptions) -> SynthDataset {
    let mut rng = rng_for(seed, u64::MAX);
    let d = opts.sparse_cols.max(5);
    let n = opts.sparse_rows;
    let columns: Vec<String> = (1..=d).map(|j| format!("X{j:02}")).collect();
    let magnitudes = [1.0, -0.8, 0.7, -0.6, 0.5];
    let mut support: Vec<usize> = (0..d).collect();
    rand::seq::SliceRandom::shuffle(support.as_mut_slice(), &mut rng);
    support.truncate(5);
    support.sort_unstable();
    let mut beta = vec![0.0; d];
    for (k, &j) in support.iter().enumerate() {
        beta[j] = magnitudes[k];
    }
    let intercept = -1.0;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let rows_per_storm = n.div_ceil(n_storms);
    let t0 = Utc.with_ymd_and_hms(2000, 8, 1, 0, 0, 0).unwrap();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let s = i / rows_per_storm;
        let x: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
        let eta = intercept + x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
        let y = rng.random::<f64>() < crate::numeric::sigmoid(eta);
        let year = 1998 + (s * 19 / n_storms) as i32;
        rows.push(LabeledObservation {
            storm_id: format!("SP{s:03}"),
            time: t0.with_year(year).unwrap() + Duration::hours(6 * (i % rows_per_storm) as i64),
            basin: opts.basin,
            y_ri: y,
            y_rw: false,
            split: Split::for_storm_start(t0.with_year(year).unwrap(), 2010),
            values: x,
        });
    }
    SynthDataset {
        scenario: Scenario::SparseSignal,
        seed,
        track: Vec::new(),
        ships: ShipsTable::default(),
        scenes: Vec::new(),
        truth: DatasetTruth {
            beta: support.iter().map(|&j| (columns[j].clone(), beta[j])).collect(),
            intercept: Some(intercept),
            notes: "labels ~ Bernoulli(sigmoid(-1 + x . beta)), x iid standard normal".into(),
            ..Default::default()
        },
        table: Some(Dataset { columns, rows }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut s = SceneSpec::new(Scene::EyeEyewall, 0.08, 20, 1);
        s.params.core_c = 40.0;
        assert!(matches!(render(&s), Err(SynthError::OutOfBounds { name: "core_c", .. })));
        s.params.core_c = -80.0;
        s.params.eye_radius_km = 900.0;
        assert!(render(&s).is_err());
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut s = SceneSpec::new(Scene::OffsetBlob, 0.08, 30, 11);
        s.params.noise_sd_c = 2.0;
        s.params.missing_frac = 0.1;
        s.params.offset_km = 60.0;
        let (a, b) = (render(&s).unwrap(), render(&s).unwrap());
        let bits = |st: &Stamp| st.tb().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.mask(), b.mask());
    }

    #[test]
    fn disc_area_limits() {
        assert!((disc_in_square(1.0, 2.0) - PI).abs() < 1e-12);
        assert_eq!(disc_in_square(3.0, 2.0), 16.0);
        // r = l * sqrt(2) / ... a value in between, checked against a fine count
        let (r, l) = (2.5, 2.0);
        let m = 2000;
        let h = 2.0 * l / m as f64;
        let mut count = 0usize;
        for i in 0..m {
            for j in 0..m {
                let x = -l + (i as f64 + 0.5) * h;
                let y = -l + (j as f64 + 0.5) * h;
                if x.hypot(y) <= r {
                    count += 1;
                }
            }
        }
        assert!((disc_in_square(r, l) - count as f64 * h * h).abs() < 1e-2);
    }

    #[test]
    fn eye_profile_shape() {
        let spec = SceneSpec::new(Scene::EyeEyewall, 0.04, 200, 0);
        let t = truth(&spec, &FeatureConfig::default());
        let prof = t.profile.unwrap();
        let min_k = (0..prof.len())
            .filter(|k| prof[*k].is_finite())
            .min_by(|a, b| prof[*a].total_cmp(&prof[*b]))
            .unwrap();
        let cfg = FeatureConfig::default();
        let r = cfg.rad_grid(0.04)[min_k];
        assert!((r - 20.0).abs() <= 5.0, "minimum at {r}");
        assert!(prof[0] > prof[min_k] + 50.0);
    }

    #[test]
    fn datasets_have_aligned_parts() {
        let ds = make_dataset(10, Scenario::StructureDriven, 5, &DatasetOptions::default()).unwrap();
        assert_eq!(ds.track.len(), ds.scenes.len());
        assert_eq!(ds.ships.rows.len(), ds.track.len());
        assert!(ds.truth.y_ri.iter().any(|y| *y));
        let sp = make_dataset(20, Scenario::SparseSignal, 5, &DatasetOptions::default()).unwrap();
        let t = sp.table.unwrap();
        assert_eq!(t.columns.len(), 50);
        assert_eq!(t.rows.len(), 2000);
        assert_eq!(sp.truth.beta.len(), 5);
        assert!(make_dataset(9, Scenario::Null, 1, &DatasetOptions::default()).is_err());
    }
}
