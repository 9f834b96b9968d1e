//! Convective-structure statistics of a stamp, each sampled densely over its
//! threshold axis (radius in km or temperature in °C).

mod bulk;
mod center;
mod organization;
mod radial;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::linspace;
use crate::stamp::{Stamp, StampError};

pub use bulk::{bulk_morphology, ecc_fn, level_set, shape_fn, size_fn, skew_fn, BulkFunctions};
pub use center::{find_center, inner_core_mean};
pub use organization::{dav, deviation_angles, DeviationField};
pub use radial::radial_profile;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Stamp(#[from] StampError),
    #[error("storm centre ({row}, {col}) lies outside the grid")]
    CenterOutsideGrid { row: f64, col: f64 },
    #[error("only {found} defined deviation angles within {radius_km} km (need {needed})")]
    InsufficientPixels {
        radius_km: f64,
        found: usize,
        needed: usize,
    },
    #[error("{empty} of {total} radial annuli are empty (limit 25%)")]
    TooManyEmptyAnnuli { empty: usize, total: usize },
    #[error("stamp radius {available_km:.1} km cannot cover the {needed_km} km radius axis")]
    StampTooSmall { available_km: f64, needed_km: f64 },
    #[error("bad feature file: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Statistic {
    DAV,
    RAD,
    SIZE,
    SKEW,
    SHAPE,
    ECC,
}

impl Statistic {
    pub const ALL: [Statistic; 6] = [
        Statistic::DAV,
        Statistic::RAD,
        Statistic::SIZE,
        Statistic::SKEW,
        Statistic::SHAPE,
        Statistic::ECC,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Statistic::DAV => "DAV",
            Statistic::RAD => "RAD",
            Statistic::SIZE => "SIZE",
            Statistic::SKEW => "SKEW",
            Statistic::SHAPE => "SHAPE",
            Statistic::ECC => "ECC",
        }
    }

    pub fn axis(&self) -> Axis {
        match self {
            Statistic::DAV | Statistic::RAD => Axis::RadiusKm,
            _ => Axis::TemperatureC,
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Statistic {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Statistic::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown statistic `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    RadiusKm,
    TemperatureC,
}

/// A statistic sampled over a dense, strictly increasing threshold grid.
///
/// `defined[k]` is false where the raw statistic could not be computed; those
/// entries hold values interpolated from neighbouring thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbFunction {
    pub statistic: Statistic,
    pub axis: Axis,
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
    pub defined: Vec<bool>,
    /// Compass azimuth (radians) of the level-set centroid offset; SKEW only,
    /// `NaN` where undefined.
    #[serde(with = "nan_as_null")]
    pub skew_direction: Option<Vec<f64>>,
}

/// JSON has no NaN, so undefined directions travel as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref()
            .map(|xs| xs.iter().map(|x| (!x.is_nan()).then_some(*x)).collect::<Vec<_>>())
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
        let v: Option<Vec<Option<f64>>> = Deserialize::deserialize(d)?;
        Ok(v.map(|xs| xs.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect()))
    }
}

impl OrbFunction {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_undefined(&self) -> usize {
        self.defined.iter().filter(|d| !**d).count()
    }

    /// CSV with columns `threshold,value[,direction],defined`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), FeatureError> {
        match &self.skew_direction {
            Some(_) => writeln!(w, "threshold,value,direction,defined")?,
            None => writeln!(w, "threshold,value,defined")?,
        }
        for k in 0..self.values.len() {
            let d = u8::from(self.defined[k]);
            match &self.skew_direction {
                Some(dir) => writeln!(w, "{},{},{},{}", self.thresholds[k], self.values[k], dir[k], d)?,
                None => writeln!(w, "{},{},{}", self.thresholds[k], self.values[k], d)?,
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(statistic: Statistic, mut r: R) -> Result<OrbFunction, FeatureError> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| FeatureError::Parse("empty file".into()))?;
        let with_dir = match header.trim() {
            "threshold,value,direction,defined" => true,
            "threshold,value,defined" => false,
            other => return Err(FeatureError::Parse(format!("unexpected header `{other}`"))),
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| FeatureError::Parse(format!("`{s}`: {e}")))
        };
        let mut f = OrbFunction {
            statistic,
            axis: statistic.axis(),
            thresholds: Vec::new(),
            values: Vec::new(),
            defined: Vec::new(),
            skew_direction: with_dir.then(Vec::new),
        };
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split(',').collect();
            let want = if with_dir { 4 } else { 3 };
            if parts.len() != want {
                return Err(FeatureError::Parse(format!("bad row `{line}`")));
            }
            f.thresholds.push(num(parts[0])?);
            f.values.push(num(parts[1])?);
            if let Some(dir) = f.skew_direction.as_mut() {
                dir.push(num(parts[2])?);
            }
            f.defined.push(parts[want - 1].trim() == "1");
        }
        Ok(f)
    }
}

/// Eye-detection settings for automated centring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EyeConfig {
    /// Half-size of the candidate search box, degrees.
    pub search_deg: f64,
    /// Inner-core radius, km.
    pub r_eye_km: f64,
    /// Required warm contrast, °C.
    pub delta_eye_c: f64,
    /// Inner-core mean must exceed this, °C.
    pub t_eye_c: f64,
}

impl Default for EyeConfig {
    fn default() -> Self {
        EyeConfig {
            search_deg: 0.5,
            r_eye_km: 25.0,
            delta_eye_c: 5.0,
            t_eye_c: -25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub dav_min_radius_km: f64,
    pub dav_max_radius_km: f64,
    /// Minimum defined deviation angles inside the smallest DAV radius.
    pub dav_min_count: usize,
    /// Gradient-magnitude floor in °C/km below which ψ is undefined.
    pub gradient_floor: f64,
    pub rad_max_radius_km: f64,
    pub max_empty_annuli_frac: f64,
    pub temp_min_c: f64,
    pub temp_max_c: f64,
    pub temp_step_c: f64,
    /// Minimum level-set size for SKEW/SHAPE/ECC.
    pub n_min: usize,
    pub eye: EyeConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            dav_min_radius_km: 50.0,
            dav_max_radius_km: 400.0,
            dav_min_count: 10,
            gradient_floor: 1e-6,
            rad_max_radius_km: 600.0,
            max_empty_annuli_frac: 0.25,
            temp_min_c: -90.0,
            temp_max_c: 30.0,
            temp_step_c: 1.0,
            n_min: 10,
            eye: EyeConfig::default(),
        }
    }
}

impl FeatureConfig {
    /// Radius grid from `lo` to `hi` at (approximately) the meridional pixel
    /// size; depends only on the grid step so all stamps share it.
    pub fn radius_grid(lo: f64, hi: f64, grid_step: f64) -> Vec<f64> {
        let dr = crate::stamp::KM_PER_DEGREE * grid_step;
        let n = ((hi - lo) / dr).round() as usize + 1;
        linspace(lo, hi, n.max(2))
    }

    pub fn dav_grid(&self, grid_step: f64) -> Vec<f64> {
        Self::radius_grid(self.dav_min_radius_km, self.dav_max_radius_km, grid_step)
    }

    pub fn rad_grid(&self, grid_step: f64) -> Vec<f64> {
        Self::radius_grid(0.0, self.rad_max_radius_km, grid_step)
    }

    pub fn temperature_grid(&self) -> Vec<f64> {
        let n = ((self.temp_max_c - self.temp_min_c) / self.temp_step_c).round() as usize + 1;
        (0..n).map(|k| self.temp_min_c + k as f64 * self.temp_step_c).collect()
    }
}

/// Which way the storm centre was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CenterSource {
    BestTrack,
    EyeDetected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StormCenter {
    pub row: f64,
    pub col: f64,
    pub source: CenterSource,
}

impl StormCenter {
    pub fn best_track(stamp: &Stamp) -> StormCenter {
        let c = stamp.half_width() as f64;
        StormCenter {
            row: c,
            col: c,
            source: CenterSource::BestTrack,
        }
    }

    pub(crate) fn check(&self, stamp: &Stamp) -> Result<(), FeatureError> {
        let max = (stamp.side() - 1) as f64;
        let ok = |v: f64| v.is_finite() && (0.0..=max).contains(&v);
        if ok(self.row) && ok(self.col) {
            Ok(())
        } else {
            Err(FeatureError::CenterOutsideGrid {
                row: self.row,
                col: self.col,
            })
        }
    }
}

/// All six functions of one stamp plus the centre they were computed about.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StampFeatures {
    pub center: StormCenter,
    pub functions: Vec<OrbFunction>,
}

impl StampFeatures {
    pub fn get(&self, stat: Statistic) -> &OrbFunction {
        self.functions
            .iter()
            .find(|f| f.statistic == stat)
            .expect("all statistics present")
    }
}

/// Centres the stamp and computes DAV, RAD, SIZE, SKEW, SHAPE and ECC.
pub fn extract_features(stamp: &Stamp, cfg: &FeatureConfig) -> Result<StampFeatures, FeatureError> {
    let center = find_center(stamp, &cfg.eye)?;
    let dav_fn = dav(stamp, &center, cfg)?;
    let rad_fn = radial_profile(stamp, &center, cfg)?;
    let bulk = bulk_morphology(stamp, &center, cfg)?;
    Ok(StampFeatures {
        center,
        functions: vec![dav_fn, rad_fn, bulk.size, bulk.skew, bulk.shape, bulk.ecc],
    })
}
