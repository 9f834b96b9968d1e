//! Raster and track data model: stamps, best-track points, the binary stamp
//! format, track CSV I/O, hourly interpolation and sample filtering.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const KM_PER_DEGREE: f64 = 111.32;
pub const TB_MIN_C: f32 = -110.0;
pub const TB_MAX_C: f32 = 60.0;
pub const DEFAULT_GRID_STEP: f64 = 0.04;
pub const STAMP_FORMAT: &str = "orb-stamp";
pub const STAMP_VERSION: u64 = 1;
const MAX_ABS_LAT: f64 = 85.0;
const MAX_HEADER_BYTES: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum StampError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header field `{field}`: {reason}")]
    Header { field: String, reason: String },
    #[error("shape mismatch in `{field}`: expected {expected}, found {found}")]
    ShapeMismatch {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("brightness temperature {value} °C at ({row}, {col}) outside [-110, 60]")]
    OutOfRange { row: usize, col: usize, value: f32 },
    #[error("invalid stamp field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("|center_lat| = {0} is at or beyond 85°; equirectangular geometry not valid")]
    LatitudeTooHigh(f64),
}

fn header_err(field: &str, reason: impl Into<String>) -> StampError {
    StampError::Header {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> StampError {
    StampError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("track for storm {0} has fewer than two points")]
    TooFewPoints(String),
    #[error("track for storm {storm} is not strictly increasing at {time}")]
    NonIncreasingTime { storm: String, time: DateTime<Utc> },
    #[error("track for storm {storm} wraps across ±180° longitude at {time}")]
    LongitudeWrap { storm: String, time: DateTime<Utc> },
    #[error("track mixes storms {0} and {1}")]
    MixedStorms(String, String),
    #[error("track time {0} is not on a whole hour")]
    NotWholeHour(DateTime<Utc>),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: bad `{field}`: {reason}")]
    Parse {
        line: u64,
        field: String,
        reason: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basin {
    NAL,
    ENP,
}

impl Basin {
    pub const ALL: [Basin; 2] = [Basin::NAL, Basin::ENP];

    pub fn as_str(&self) -> &'static str {
        match self {
            Basin::NAL => "NAL",
            Basin::ENP => "ENP",
        }
    }
}

impl fmt::Display for Basin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Basin {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "NAL" | "AL" => Ok(Basin::NAL),
            "ENP" | "EP" => Ok(Basin::ENP),
            other => Err(format!("unknown basin `{other}` (expected NAL or ENP)")),
        }
    }
}

/// Format used for every timestamp the pipeline writes.
pub fn format_time(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Parses ISO-8601 timestamps, with or without a zone suffix (UTC assumed).
pub fn parse_time(s: &str) -> Result<DateTime<Utc>, String> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(n) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(n.and_utc());
        }
    }
    Err(format!("unparseable time `{s}`"))
}

fn is_whole_hour(t: &DateTime<Utc>) -> bool {
    t.minute() == 0 && t.second() == 0 && t.nanosecond() == 0
}

/// One cyclone-centred brightness-temperature raster.
///
/// The grid is `(2N+1) x (2N+1)`, row-major and north-up, with the storm
/// position at pixel `(N, N)`. Masked pixels hold `NaN` in `tb`; the mask is
/// the source of truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Stamp {
    storm_id: String,
    time: DateTime<Utc>,
    center_lat: f64,
    center_lon: f64,
    grid_step: f64,
    half_width: usize,
    tb: Vec<f32>,
    mask: Vec<bool>,
    n_masked: usize,
}

impl Stamp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        storm_id: impl Into<String>,
        time: DateTime<Utc>,
        center_lat: f64,
        center_lon: f64,
        grid_step: f64,
        half_width: usize,
        mut tb: Vec<f32>,
        mask: Vec<bool>,
    ) -> Result<Self, StampError> {
        let storm_id = storm_id.into();
        if storm_id.is_empty() {
            return Err(invalid("storm_id", "empty"));
        }
        if !is_whole_hour(&time) {
            return Err(invalid("time", "not on a whole hour"));
        }
        if !center_lat.is_finite() || center_lat.abs() > 90.0 {
            return Err(invalid("center_lat", format!("{center_lat} not a latitude")));
        }
        if !center_lon.is_finite() || center_lon.abs() > 360.0 {
            return Err(invalid("center_lon", format!("{center_lon} not a longitude")));
        }
        if !(grid_step.is_finite() && grid_step > 0.0) {
            return Err(invalid("grid_step", format!("{grid_step} must be positive")));
        }
        if half_width == 0 {
            return Err(invalid("half_width", "must be at least 1"));
        }
        let side = 2 * half_width + 1;
        let n = side * side;
        if tb.len() != n {
            return Err(StampError::ShapeMismatch {
                field: "tb".into(),
                expected: n,
                found: tb.len(),
            });
        }
        if mask.len() != n {
            return Err(StampError::ShapeMismatch {
                field: "mask".into(),
                expected: n,
                found: mask.len(),
            });
        }
        let mut n_masked = 0;
        for (i, v) in tb.iter_mut().enumerate() {
            if mask[i] {
                *v = f32::NAN;
                n_masked += 1;
            } else if !(v.is_finite() && (TB_MIN_C..=TB_MAX_C).contains(v)) {
                return Err(StampError::OutOfRange {
                    row: i / side,
                    col: i % side,
                    value: *v,
                });
            }
        }
        Ok(Stamp {
            storm_id,
            time,
            center_lat,
            center_lon,
            grid_step,
            half_width,
            tb,
            mask,
            n_masked,
        })
    }

    pub fn storm_id(&self) -> &str {
        &self.storm_id
    }
    pub fn time(&self) -> DateTime<Utc> {
        self.time
    }
    pub fn center_lat(&self) -> f64 {
        self.center_lat
    }
    pub fn center_lon(&self) -> f64 {
        self.center_lon
    }
    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }
    pub fn half_width(&self) -> usize {
        self.half_width
    }
    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }
    pub fn len(&self) -> usize {
        self.tb.len()
    }
    pub fn is_empty(&self) -> bool {
        self.tb.is_empty()
    }
    pub fn tb(&self) -> &[f32] {
        &self.tb
    }
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
    pub fn n_masked(&self) -> usize {
        self.n_masked
    }
    pub fn missing_fraction(&self) -> f64 {
        self.n_masked as f64 / self.tb.len() as f64
    }

    /// Temperature at `(row, col)`, `None` when masked.
    #[inline]
    pub fn value(&self, row: usize, col: usize) -> Option<f32> {
        let i = row * self.side() + col;
        if self.mask[i] {
            None
        } else {
            Some(self.tb[i])
        }
    }

    /// Same metadata, new temperatures. Masked pixels stay masked.
    pub fn map_tb(&self, f: impl Fn(f32) -> f32) -> Result<Stamp, StampError> {
        let tb = self
            .tb
            .iter()
            .zip(&self.mask)
            .map(|(&v, &m)| if m { f32::NAN } else { f(v) })
            .collect();
        Stamp::new(
            self.storm_id.clone(),
            self.time,
            self.center_lat,
            self.center_lon,
            self.grid_step,
            self.half_width,
            tb,
            self.mask.clone(),
        )
    }

    /// Grid rotated 90° clockwise about the centre pixel.
    pub fn rotated_cw(&self) -> Stamp {
        let s = self.side();
        let mut tb = vec![0.0f32; s * s];
        let mut mask = vec![false; s * s];
        for r in 0..s {
            for c in 0..s {
                // source (r, c) -> destination (c, s-1-r)
                let dst = c * s + (s - 1 - r);
                tb[dst] = self.tb[r * s + c];
                mask[dst] = self.mask[r * s + c];
            }
        }
        Stamp {
            tb,
            mask,
            ..self.clone()
        }
    }

    pub fn frame(&self) -> Result<GridFrame, StampError> {
        GridFrame::new(self.center_lat, self.grid_step, self.half_width)
    }
}

/// Anything carrying the identity and missing-data fraction of a stamp.
pub trait StampMeta {
    fn storm_id(&self) -> &str;
    fn time(&self) -> DateTime<Utc>;
    fn missing_fraction(&self) -> f64;
}

impl StampMeta for Stamp {
    fn storm_id(&self) -> &str {
        &self.storm_id
    }
    fn time(&self) -> DateTime<Utc> {
        self.time
    }
    fn missing_fraction(&self) -> f64 {
        Stamp::missing_fraction(self)
    }
}

/// Equirectangular pixel spacing for a stamp grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridFrame {
    pub dx_km: f64,
    pub dy_km: f64,
    pub half_width: usize,
}

impl GridFrame {
    pub fn new(center_lat: f64, grid_step: f64, half_width: usize) -> Result<Self, StampError> {
        if center_lat.abs() >= MAX_ABS_LAT {
            return Err(StampError::LatitudeTooHigh(center_lat));
        }
        let dy_km = KM_PER_DEGREE * grid_step;
        let dx_km = dy_km * center_lat.to_radians().cos();
        Ok(GridFrame {
            dx_km,
            dy_km,
            half_width,
        })
    }

    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn pixel_area_km2(&self) -> f64 {
        self.dx_km * self.dy_km
    }

    /// East/north offset in km of pixel `(row, col)` from a fractional centre.
    #[inline]
    pub fn offset_km(&self, row: usize, col: usize, center_row: f64, center_col: f64) -> (f64, f64) {
        let x = (col as f64 - center_col) * self.dx_km;
        let y = (center_row - row as f64) * self.dy_km;
        (x, y)
    }
}

/// Compass azimuth (radians clockwise from north, in `[0, 2π)`) of an east/north offset.
pub fn compass_azimuth(x_east: f64, y_north: f64) -> f64 {
    let a = x_east.atan2(y_north);
    if a < 0.0 {
        a + std::f64::consts::TAU
    } else {
        a
    }
}

/// Per-pixel distance, azimuth and (uniform) area relative to the centre pixel.
#[derive(Debug, Clone)]
pub struct PixelGeometry {
    pub frame: GridFrame,
    pub distance_km: Vec<f64>,
    pub azimuth_rad: Vec<f64>,
}

impl PixelGeometry {
    pub fn area_km2(&self, _index: usize) -> f64 {
        self.frame.pixel_area_km2()
    }
}

pub fn pixel_geometry(stamp: &Stamp) -> Result<PixelGeometry, StampError> {
    let frame = stamp.frame()?;
    let side = frame.side();
    let c = stamp.half_width as f64;
    let mut distance_km = Vec::with_capacity(side * side);
    let mut azimuth_rad = Vec::with_capacity(side * side);
    for row in 0..side {
        for col in 0..side {
            let (x, y) = frame.offset_km(row, col, c, c);
            distance_km.push(x.hypot(y));
            azimuth_rad.push(compass_azimuth(x, y));
        }
    }
    Ok(PixelGeometry {
        frame,
        distance_km,
        azimuth_rad,
    })
}

// ---------------------------------------------------------------------------
// Binary stamp format
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct HeaderOut<'a> {
    format: &'a str,
    version: u64,
    storm_id: &'a str,
    time: String,
    center_lat: f64,
    center_lon: f64,
    grid_step: f64,
    half_width: usize,
    data_offset: usize,
}

/// Serializes a stamp: one JSON header line, then `(2N+1)^2` little-endian
/// `f32` temperatures (masked pixels as canonical NaN), then the mask packed
/// eight pixels per byte, least significant bit first.
pub fn encode_stamp(stamp: &Stamp) -> Vec<u8> {
    let mut header = HeaderOut {
        format: STAMP_FORMAT,
        version: STAMP_VERSION,
        storm_id: &stamp.storm_id,
        time: format_time(&stamp.time),
        center_lat: stamp.center_lat,
        center_lon: stamp.center_lon,
        grid_step: stamp.grid_step,
        half_width: stamp.half_width,
        data_offset: 0,
    };
    // The offset counts its own digits; iterate to the fixed point.
    let mut line = serde_json::to_string(&header).expect("header serializes");
    loop {
        let want = line.len() + 1;
        if header.data_offset == want {
            break;
        }
        header.data_offset = want;
        line = serde_json::to_string(&header).expect("header serializes");
    }
    let n = stamp.tb.len();
    let mut out = Vec::with_capacity(header.data_offset + 4 * n + n.div_ceil(8));
    out.extend_from_slice(line.as_bytes());
    out.push(b'\n');
    for (&v, &m) in stamp.tb.iter().zip(&stamp.mask) {
        let v = if m { f32::NAN } else { v };
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut packed = vec![0u8; n.div_ceil(8)];
    for (i, &m) in stamp.mask.iter().enumerate() {
        if m {
            packed[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&packed);
    out
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, StampError> {
    obj.get(name).ok_or_else(|| header_err(name, "missing"))
}

fn field_f64(obj: &Map<String, Value>, name: &str) -> Result<f64, StampError> {
    field(obj, name)?
        .as_f64()
        .ok_or_else(|| header_err(name, "not a number"))
}

fn field_u64(obj: &Map<String, Value>, name: &str) -> Result<u64, StampError> {
    field(obj, name)?
        .as_u64()
        .ok_or_else(|| header_err(name, "not a non-negative integer"))
}

fn field_str<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a str, StampError> {
    field(obj, name)?
        .as_str()
        .ok_or_else(|| header_err(name, "not a string"))
}

pub fn decode_stamp(bytes: &[u8]) -> Result<Stamp, StampError> {
    let limit = bytes.len().min(MAX_HEADER_BYTES);
    let nl = bytes[..limit]
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| header_err("header", "no newline-terminated header line"))?;
    let text = std::str::from_utf8(&bytes[..nl]).map_err(|_| header_err("header", "not UTF-8"))?;
    let value: Value =
        serde_json::from_str(text).map_err(|e| header_err("header", format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| header_err("header", "not a JSON object"))?;

    let format = field_str(obj, "format")?;
    if format != STAMP_FORMAT {
        return Err(header_err("format", format!("expected `{STAMP_FORMAT}`, got `{format}`")));
    }
    let version = field_u64(obj, "version")?;
    if version != STAMP_VERSION {
        return Err(header_err("version", format!("unsupported version {version}")));
    }
    let storm_id = field_str(obj, "storm_id")?.to_string();
    let time = parse_time(field_str(obj, "time")?).map_err(|e| header_err("time", e))?;
    let center_lat = field_f64(obj, "center_lat")?;
    let center_lon = field_f64(obj, "center_lon")?;
    let grid_step = field_f64(obj, "grid_step")?;
    let half_width = field_u64(obj, "half_width")? as usize;
    let data_offset = field_u64(obj, "data_offset")? as usize;
    if data_offset < nl + 1 || data_offset > bytes.len() {
        return Err(header_err(
            "data_offset",
            format!("{data_offset} outside file (header ends at {})", nl + 1),
        ));
    }
    if half_width == 0 || half_width > 100_000 {
        return Err(header_err("half_width", format!("{half_width} out of range")));
    }
    let side = 2 * half_width + 1;
    let n = side * side;
    let expected = data_offset + 4 * n + n.div_ceil(8);
    if bytes.len() != expected {
        return Err(StampError::ShapeMismatch {
            field: "payload".into(),
            expected,
            found: bytes.len(),
        });
    }
    let tb_bytes = &bytes[data_offset..data_offset + 4 * n];
    let mask_bytes = &bytes[data_offset + 4 * n..];
    let mask: Vec<bool> = (0..n).map(|i| mask_bytes[i / 8] >> (i % 8) & 1 == 1).collect();
    let tb: Vec<f32> = tb_bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Stamp::new(storm_id, time, center_lat, center_lon, grid_step, half_width, tb, mask)
}

pub fn read_stamp(path: impl AsRef<Path>) -> Result<Stamp, StampError> {
    decode_stamp(&fs::read(path)?)
}

pub fn write_stamp(stamp: &Stamp, path: impl AsRef<Path>) -> Result<(), StampError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_stamp(stamp))?;
    Ok(())
}

/// Conventional file name, `<storm>_<YYYYmmddHH>.stamp`.
pub fn stamp_file_name(storm_id: &str, time: &DateTime<Utc>) -> String {
    format!("{}_{}.stamp", storm_id, time.format("%Y%m%d%H"))
}

// ---------------------------------------------------------------------------
// Tracks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TrackPoint {
    pub storm_id: String,
    pub time: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    /// knots
    pub intensity: f64,
    pub dist_to_land: f64,
    pub basin: Basin,
}

pub const TRACK_HEADER: [&str; 7] = [
    "storm_id",
    "time",
    "lat",
    "lon",
    "intensity_kt",
    "dist_to_land_km",
    "basin",
];

pub fn read_track_csv(path: impl AsRef<Path>) -> Result<Vec<TrackPoint>, TrackError> {
    let rdr = csv::Reader::from_path(path)?;
    parse_track(rdr)
}

pub fn parse_track<R: std::io::Read>(mut rdr: csv::Reader<R>) -> Result<Vec<TrackPoint>, TrackError> {
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize, TrackError> {
        headers.iter().position(|h| h.trim() == name).ok_or(TrackError::Parse {
            line: 1,
            field: name.to_string(),
            reason: "missing column".into(),
        })
    };
    let idx: Vec<usize> = TRACK_HEADER.iter().map(|h| col(h)).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |k: usize| rec.get(idx[k]).unwrap_or("").trim();
        let num = |k: usize| -> Result<f64, TrackError> {
            get(k).parse::<f64>().map_err(|e| TrackError::Parse {
                line,
                field: TRACK_HEADER[k].to_string(),
                reason: e.to_string(),
            })
        };
        let time = parse_time(get(1)).map_err(|reason| TrackError::Parse {
            line,
            field: "time".into(),
            reason,
        })?;
        let basin = get(6).parse::<Basin>().map_err(|reason| TrackError::Parse {
            line,
            field: "basin".into(),
            reason,
        })?;
        let intensity = num(4)?;
        if intensity < 0.0 {
            return Err(TrackError::Parse {
                line,
                field: "intensity_kt".into(),
                reason: "negative".into(),
            });
        }
        out.push(TrackPoint {
            storm_id: get(0).to_string(),
            time,
            lat: num(2)?,
            lon: num(3)?,
            intensity,
            dist_to_land: num(5)?,
            basin,
        });
    }
    Ok(out)
}

pub fn write_track_csv<W: std::io::Write>(w: W, points: &[TrackPoint]) -> Result<(), TrackError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TRACK_HEADER)?;
    for p in points {
        wtr.write_record([
            p.storm_id.clone(),
            format_time(&p.time),
            p.lat.to_string(),
            p.lon.to_string(),
            p.intensity.to_string(),
            p.dist_to_land.to_string(),
            p.basin.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Splits a multi-storm track into per-storm, time-sorted tracks (sorted by storm id).
pub fn group_by_storm(points: &[TrackPoint]) -> Vec<(String, Vec<TrackPoint>)> {
    let mut map: HashMap<&str, Vec<TrackPoint>> = HashMap::new();
    for p in points {
        map.entry(&p.storm_id).or_default().push(p.clone());
    }
    let mut out: Vec<(String, Vec<TrackPoint>)> = map
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by_key(|p| p.time);
            (k.to_string(), v)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Linear interpolation of one storm's track to every whole hour between its
/// first and last point. Knots are reproduced unchanged.
pub fn interpolate_track(points: &[TrackPoint]) -> Result<Vec<TrackPoint>, TrackError> {
    let first = points
        .first()
        .ok_or_else(|| TrackError::TooFewPoints(String::new()))?;
    if points.len() < 2 {
        return Err(TrackError::TooFewPoints(first.storm_id.clone()));
    }
    for p in points {
        if p.storm_id != first.storm_id {
            return Err(TrackError::MixedStorms(first.storm_id.clone(), p.storm_id.clone()));
        }
        if !is_whole_hour(&p.time) {
            return Err(TrackError::NotWholeHour(p.time));
        }
    }
    for w in points.windows(2) {
        if w[1].time <= w[0].time {
            return Err(TrackError::NonIncreasingTime {
                storm: first.storm_id.clone(),
                time: w[1].time,
            });
        }
        if (w[1].lon - w[0].lon).abs() > 180.0 {
            return Err(TrackError::LongitudeWrap {
                storm: first.storm_id.clone(),
                time: w[1].time,
            });
        }
    }
    let mut out = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let span = (b.time - a.time).num_hours();
        out.push(a.clone());
        for h in 1..span {
            let t = h as f64 / span as f64;
            let lerp = |u: f64, v: f64| u + t * (v - u);
            out.push(TrackPoint {
                storm_id: a.storm_id.clone(),
                time: a.time + Duration::hours(h),
                lat: lerp(a.lat, b.lat),
                lon: lerp(a.lon, b.lon),
                intensity: lerp(a.intensity, b.intensity),
                dist_to_land: lerp(a.dist_to_land, b.dist_to_land),
                basin: a.basin,
            });
        }
    }
    out.push(points[points.len() - 1].clone());
    Ok(out)
}

// ---------------------------------------------------------------------------
// Sample filter
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleFilter {
    /// knots
    pub min_intensity: f64,
    /// km
    pub min_land_dist: f64,
    pub max_missing_frac: f64,
    /// knots per 24 h
    pub rapid_threshold: f64,
}

impl Default for SampleFilter {
    fn default() -> Self {
        SampleFilter {
            min_intensity: 50.0,
            min_land_dist: 250.0,
            max_missing_frac: 0.05,
            rapid_threshold: 25.0,
        }
    }
}

impl SampleFilter {
    pub fn new(
        min_intensity: f64,
        min_land_dist: f64,
        max_missing_frac: f64,
        rapid_threshold: f64,
    ) -> Result<Self, String> {
        let f = SampleFilter {
            min_intensity,
            min_land_dist,
            max_missing_frac,
            rapid_threshold,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("min_intensity", self.min_intensity),
            ("min_land_dist", self.min_land_dist),
            ("max_missing_frac", self.max_missing_frac),
            ("rapid_threshold", self.rapid_threshold),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be strictly positive, got {v}"));
            }
        }
        if self.max_missing_frac >= 1.0 {
            return Err(format!(
                "max_missing_frac must be below 1, got {}",
                self.max_missing_frac
            ));
        }
        Ok(())
    }
}

/// Selects the 6-hourly track points usable for modelling.
///
/// A point is kept when its intensity reaches `min_intensity`, the storm has
/// at least 24 h of prior track, every track point from `t` to `t + 24 h`
/// (inclusive) is at least `min_land_dist` from land, and a stamp for the
/// same storm and time exists with missing fraction below `max_missing_frac`.
/// Output is sorted by storm id, then time.
pub fn apply_filter<'a, S: StampMeta>(
    track: &'a [TrackPoint],
    stamps: &'a [S],
    f: &SampleFilter,
) -> Vec<(&'a TrackPoint, &'a S)> {
    let mut stamp_index: HashMap<(&str, DateTime<Utc>), &S> = HashMap::new();
    for s in stamps {
        stamp_index.insert((s.storm_id(), s.time()), s);
    }
    let mut by_storm: HashMap<&str, Vec<&TrackPoint>> = HashMap::new();
    for p in track {
        by_storm.entry(&p.storm_id).or_default().push(p);
    }
    let mut storms: Vec<&str> = by_storm.keys().copied().collect();
    storms.sort_unstable();

    let window = Duration::hours(24);
    let mut out = Vec::new();
    for storm in storms {
        let pts = by_storm.get_mut(storm).unwrap();
        pts.sort_by_key(|p| p.time);
        let start = pts[0].time;
        for p in pts.iter() {
            if !(is_whole_hour(&p.time) && p.time.hour() % 6 == 0) {
                continue;
            }
            if p.intensity < f.min_intensity {
                continue;
            }
            if p.time - start < window {
                continue;
            }
            let over_water = pts
                .iter()
                .filter(|q| q.time >= p.time && q.time <= p.time + window)
                .all(|q| q.dist_to_land >= f.min_land_dist);
            if !over_water {
                continue;
            }
            match stamp_index.get(&(storm, p.time)) {
                Some(s) if s.missing_fraction() < f.max_missing_frac => out.push((*p, *s)),
                _ => {}
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t(h: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2005, 8, 25, 0, 0, 0).unwrap() + Duration::hours(h)
    }

    fn uniform(n: usize, v: f32) -> Stamp {
        let side = 2 * n + 1;
        Stamp::new("AL122005", t(0), 20.0, -80.0, 0.04, n, vec![v; side * side], vec![false; side * side])
            .unwrap()
    }

    fn pt(h: i64, kt: f64, land: f64) -> TrackPoint {
        TrackPoint {
            storm_id: "AL122005".into(),
            time: t(h),
            lat: 20.0,
            lon: -80.0,
            intensity: kt,
            dist_to_land: land,
            basin: Basin::NAL,
        }
    }

    #[test]
    fn minimal_stamp_round_trips() {
        let s = uniform(1, -50.0);
        assert_eq!(s.half_width(), 1);
        assert_eq!(s.n_masked(), 0);
        let bytes = encode_stamp(&s);
        let back = decode_stamp(&bytes).unwrap();
        assert_eq!(back.tb(), s.tb());
        assert_eq!(encode_stamp(&back), bytes);
    }

    #[test]
    fn header_offset_is_self_consistent() {
        let bytes = encode_stamp(&uniform(2, -10.0));
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let hdr: Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        assert_eq!(hdr["data_offset"].as_u64().unwrap() as usize, nl + 1);
    }

    #[test]
    fn masked_fraction_counts_entries() {
        let side = 11; // N = 5, 121 pixels
        let mut mask = vec![false; side * side];
        let mut k = 0;
        for m in mask.iter_mut().step_by(10) {
            *m = true;
            k += 1;
        }
        let s = Stamp::new("X", t(0), 0.0, 0.0, 0.04, 5, vec![-40.0; side * side], mask).unwrap();
        assert_eq!(s.n_masked(), k);
        assert!((s.missing_fraction() - k as f64 / 121.0).abs() < 1e-15);
        assert!(s.tb()[0].is_nan());
        let back = decode_stamp(&encode_stamp(&s)).unwrap();
        assert_eq!(back.mask(), s.mask());
    }

    #[test]
    fn out_of_range_temperature_is_rejected() {
        let mut tb = vec![-50.0f32; 9];
        tb[4] = 200.0;
        let err = Stamp::new("X", t(0), 0.0, 0.0, 0.04, 1, tb, vec![false; 9]).unwrap_err();
        assert!(matches!(err, StampError::OutOfRange { row: 1, col: 1, .. }));
    }

    #[test]
    fn out_of_range_in_file_is_rejected() {
        let mut bytes = encode_stamp(&uniform(1, -50.0));
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        bytes[nl + 1..nl + 5].copy_from_slice(&200.0f32.to_le_bytes());
        assert!(matches!(decode_stamp(&bytes), Err(StampError::OutOfRange { .. })));
    }

    #[test]
    fn header_errors_name_the_field() {
        let bytes = encode_stamp(&uniform(1, -50.0));
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let mut hdr: Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        hdr.as_object_mut().unwrap().remove("grid_step");
        let mut broken = serde_json::to_vec(&hdr).unwrap();
        broken.push(b'\n');
        match decode_stamp(&broken) {
            Err(StampError::Header { field, .. }) => assert_eq!(field, "grid_step"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            decode_stamp(b"not json\n"),
            Err(StampError::Header { .. })
        ));
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(
            decode_stamp(truncated),
            Err(StampError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn interpolation_is_linear_and_keeps_knots() {
        let mut a = pt(0, 50.0, 900.0);
        let mut b = pt(6, 56.0, 900.0);
        a.lat = 20.0;
        b.lat = 21.0;
        let out = interpolate_track(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(out.len(), 7);
        assert_eq!(out[0], a);
        assert_eq!(out[6], b);
        assert!((out[5].intensity - 55.0).abs() < 1e-12);
        assert!((out[3].lat - 20.5).abs() < 1e-12);
    }

    #[test]
    fn interpolation_errors() {
        assert!(matches!(
            interpolate_track(&[pt(0, 50.0, 900.0)]),
            Err(TrackError::TooFewPoints(_))
        ));
        assert!(matches!(
            interpolate_track(&[pt(0, 50.0, 900.0), pt(0, 55.0, 900.0)]),
            Err(TrackError::NonIncreasingTime { .. })
        ));
        let mut b = pt(6, 50.0, 900.0);
        b.lon = 179.0;
        let mut a = pt(0, 50.0, 900.0);
        a.lon = -179.0;
        assert!(matches!(
            interpolate_track(&[a, b]),
            Err(TrackError::LongitudeWrap { .. })
        ));
    }

    #[test]
    fn filter_gates() {
        let track: Vec<TrackPoint> = (0..=8)
            .map(|k| pt(6 * k, 60.0, if k == 6 { 200.0 } else { 900.0 }))
            .collect();
        let stamps: Vec<Stamp> = track
            .iter()
            .map(|p| {
                let s = uniform(1, -50.0);
                Stamp::new(
                    p.storm_id.clone(),
                    p.time,
                    20.0,
                    -80.0,
                    0.04,
                    1,
                    s.tb().to_vec(),
                    s.mask().to_vec(),
                )
                .unwrap()
            })
            .collect();
        let kept: Vec<i64> = apply_filter(&track, &stamps, &SampleFilter::default())
            .iter()
            .map(|(p, _)| (p.time - t(0)).num_hours())
            .collect();
        // hours 0-18 lack history; 24..36 see the 200-km point at 36 in their window
        assert_eq!(kept, vec![42, 48]);
    }

    #[test]
    fn filter_validation() {
        assert!(SampleFilter::new(50.0, 250.0, 1.0, 25.0).is_err());
        assert!(SampleFilter::new(0.0, 250.0, 0.05, 25.0).is_err());
        assert!(SampleFilter::new(50.0, 250.0, 0.05, 25.0).is_ok());
    }

    #[test]
    fn geometry_steps() {
        let side = 3;
        let mk = |lat: f64| {
            Stamp::new("X", t(0), lat, 0.0, 0.04, 1, vec![0.0; side * side], vec![false; side * side])
                .unwrap()
        };
        let g0 = pixel_geometry(&mk(0.0)).unwrap();
        assert_eq!(g0.distance_km[4], 0.0);
        assert!((g0.distance_km[5] - 4.4528).abs() < 1e-12);
        assert!((g0.azimuth_rad[5] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let g60 = pixel_geometry(&mk(60.0)).unwrap();
        assert!((g60.frame.dx_km / g0.frame.dx_km - 0.5).abs() < 1e-12);
        assert!((g0.area_km2(0) - 4.4528 * 4.4528).abs() < 1e-9);
        assert!(matches!(
            pixel_geometry(&mk(85.0)),
            Err(StampError::LatitudeTooHigh(_))
        ));
    }

    #[test]
    fn track_csv_round_trip() {
        let track = vec![pt(0, 50.0, 900.0), pt(6, 56.0, 800.0)];
        let mut buf = Vec::new();
        write_track_csv(&mut buf, &track).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("storm_id,time,lat,lon,intensity_kt,dist_to_land_km,basin\n"));
        let back = parse_track(csv::Reader::from_reader(buf.as_slice())).unwrap();
        assert_eq!(back, track);
    }
}
