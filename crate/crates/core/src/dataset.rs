//! Labelled 6-hourly observations: rapid-change labels, lagged predictors and
//! the storm-level train/test split.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, Timelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eof::OrbCoefficients;
use crate::features::Statistic;
use crate::stamp::{format_time, parse_time, Basin, TrackPoint};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("duplicate key ({storm_id}, {time}) in {source_name}")]
    DuplicateKey {
        storm_id: String,
        time: String,
        source_name: &'static str,
    },
    #[error("unknown predictor set `{0}` (expected SHIPS_only, ORB_only, SHIPS_plus_ORB or SHIPS_plus_Persistence)")]
    UnknownPredictorSet(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("row {row}: {reason}")]
    Parse { row: usize, reason: String },
    #[error("times must be strictly increasing")]
    Unsorted,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// The ten environmental columns of the SHIPS-like input table.
pub const SHIPS_ENV: [&str; 10] = [
    "SHRD", "SHDC", "SHRS", "OHC", "RSST", "RHLO", "RHMD", "RHHI", "VMPI", "U200",
];

/// Position columns taken from the track.
pub const POSITION: [&str; 2] = ["LAT", "LON"];

/// Default number of ORB coefficients per statistic in the predictor sets.
pub const ORB_COUNTS: [(Statistic, usize); 6] = [
    (Statistic::DAV, 3),
    (Statistic::RAD, 3),
    (Statistic::SIZE, 2),
    (Statistic::SKEW, 3),
    (Statistic::SHAPE, 3),
    (Statistic::ECC, 3),
];

pub const PERSISTENCE: [&str; 3] = ["V", "D6V", "D12V"];

const LAG_HOURS: [i64; 3] = [6, 12, 24];

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RapidLabels {
    pub y_ri: Vec<bool>,
    pub y_rw: Vec<bool>,
    /// 24-h windows that could not be evaluated because the track has a gap.
    pub skipped_windows: usize,
}

/// Labels each point that lies in any 24-h window `[t, t + 24 h]` (both ends
/// included) whose intensity change is at least `+threshold` (RI) or at most
/// `-threshold` (RW). A window counts only if all five 6-hourly points exist.
pub fn label_rapid_change(
    times: &[DateTime<Utc>],
    intensity: &[f64],
    threshold: f64,
) -> Result<RapidLabels, DatasetError> {
    let n = times.len();
    assert_eq!(n, intensity.len(), "times and intensities must align");
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DatasetError::Unsorted);
    }
    let six = Duration::hours(6);
    let day = Duration::hours(24);
    let mut out = RapidLabels {
        y_ri: vec![false; n],
        y_rw: vec![false; n],
        skipped_windows: 0,
    };
    for i in 0..n {
        let contiguous = i + 4 < n && (i..i + 4).all(|k| times[k + 1] - times[k] == six);
        if !contiguous {
            if times[n - 1] >= times[i] + day {
                out.skipped_windows += 1;
            }
            continue;
        }
        let change = intensity[i + 4] - intensity[i];
        if change >= threshold {
            out.y_ri[i..=i + 4].iter_mut().for_each(|y| *y = true);
        }
        if change <= -threshold {
            out.y_rw[i..=i + 4].iter_mut().for_each(|y| *y = true);
        }
    }
    Ok(out)
}

/// Number of maximal runs of consecutive positive labels.
pub fn count_events(labels: &[bool]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| y && (i == 0 || !labels[i - 1]))
        .count()
}

// ---------------------------------------------------------------------------
// Lags
// ---------------------------------------------------------------------------

pub fn lag_name(hours: i64, var: &str) -> String {
    format!("D{hours}_{var}")
}

/// Base value plus its 6-, 12- and 24-h backward differences, in that order.
/// `None` if any of `t`, `t-6h`, `t-12h`, `t-24h` is unavailable.
pub fn lagged_values(series: &BTreeMap<DateTime<Utc>, f64>, t: DateTime<Utc>) -> Option<[f64; 4]> {
    let now = *series.get(&t)?;
    let mut out = [now, 0.0, 0.0, 0.0];
    for (slot, h) in LAG_HOURS.iter().enumerate() {
        out[slot + 1] = now - series.get(&(t - Duration::hours(*h)))?;
    }
    Some(out)
}

/// Persistence predictors `V(t)`, `V(t) - V(t-6h)` and `V(t-6h) - V(t-12h)`.
pub fn persistence_values(v: &BTreeMap<DateTime<Utc>, f64>, t: DateTime<Utc>) -> Option<[f64; 3]> {
    let v0 = *v.get(&t)?;
    let v6 = *v.get(&(t - Duration::hours(6)))?;
    let v12 = *v.get(&(t - Duration::hours(12)))?;
    Some([v0, v0 - v6, v6 - v12])
}

/// A named time series with lag columns appended; rows without 24 h of
/// history are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedSeries {
    pub columns: Vec<String>,
    pub times: Vec<DateTime<Utc>>,
    pub rows: Vec<Vec<f64>>,
}

pub fn add_lags(times: &[DateTime<Utc>], vars: &[(&str, Vec<f64>)]) -> LaggedSeries {
    let series: Vec<BTreeMap<DateTime<Utc>, f64>> = vars
        .iter()
        .map(|(_, v)| times.iter().copied().zip(v.iter().copied()).collect())
        .collect();
    let mut columns = Vec::new();
    for (name, _) in vars {
        columns.push(name.to_string());
        columns.extend(LAG_HOURS.iter().map(|h| lag_name(*h, name)));
    }
    let mut out = LaggedSeries {
        columns,
        times: Vec::new(),
        rows: Vec::new(),
    };
    for &t in times {
        let row: Option<Vec<f64>> = series
            .iter()
            .map(|s| lagged_values(s, t))
            .collect::<Option<Vec<_>>>()
            .map(|v| v.concat());
        if let Some(row) = row {
            out.times.push(t);
            out.rows.push(row);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Predictor sets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[allow(non_camel_case_types)]
pub enum PredictorSet {
    SHIPS_only,
    ORB_only,
    SHIPS_plus_ORB,
    SHIPS_plus_Persistence,
}

impl PredictorSet {
    pub const ALL: [PredictorSet; 4] = [
        PredictorSet::SHIPS_only,
        PredictorSet::ORB_only,
        PredictorSet::SHIPS_plus_ORB,
        PredictorSet::SHIPS_plus_Persistence,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PredictorSet::SHIPS_only => "SHIPS_only",
            PredictorSet::ORB_only => "ORB_only",
            PredictorSet::SHIPS_plus_ORB => "SHIPS_plus_ORB",
            PredictorSet::SHIPS_plus_Persistence => "SHIPS_plus_Persistence",
        }
    }

    fn uses_ships(&self) -> bool {
        !matches!(self, PredictorSet::ORB_only)
    }

    fn uses_orb(&self) -> bool {
        matches!(self, PredictorSet::ORB_only | PredictorSet::SHIPS_plus_ORB)
    }

    /// Base variables that receive lag columns.
    pub fn base_variables(&self, orb_counts: &[(Statistic, usize)]) -> Vec<String> {
        let mut v = Vec::new();
        if self.uses_ships() {
            v.extend(SHIPS_ENV.iter().chain(&POSITION).map(|s| s.to_string()));
        }
        if self.uses_orb() {
            v.extend(orb_base_names(orb_counts));
        }
        v
    }

    /// Full ordered column list: each base variable followed by its lags,
    /// then persistence columns where applicable.
    pub fn columns(&self, orb_counts: &[(Statistic, usize)]) -> Vec<String> {
        let mut cols = Vec::new();
        for b in self.base_variables(orb_counts) {
            cols.extend(LAG_HOURS.iter().map(|h| lag_name(*h, &b)));
            cols.insert(cols.len() - LAG_HOURS.len(), b);
        }
        if *self == PredictorSet::SHIPS_plus_Persistence {
            cols.extend(PERSISTENCE.iter().map(|s| s.to_string()));
        }
        cols
    }
}

impl fmt::Display for PredictorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredictorSet {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PredictorSet::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DatasetError::UnknownPredictorSet(s.to_string()))
    }
}

pub fn orb_base_names(orb_counts: &[(Statistic, usize)]) -> Vec<String> {
    orb_counts
        .iter()
        .flat_map(|(s, k)| (1..=*k).map(move |i| format!("{}{}", s.as_str(), i)))
        .collect()
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    /// Whole storms go to one side: the year the storm starts decides.
    pub fn for_storm_start(start: DateTime<Utc>, split_year: i32) -> Split {
        if start.year() < split_year {
            Split::Train
        } else {
            Split::Test
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    RI,
    RW,
}

impl FromStr for Target {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RI" => Ok(Target::RI),
            "RW" => Ok(Target::RW),
            _ => Err(format!("unknown target `{s}` (expected RI or RW)")),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::RI => "RI",
            Target::RW => "RW",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledObservation {
    pub storm_id: String,
    pub time: DateTime<Utc>,
    pub basin: Basin,
    pub y_ri: bool,
    pub y_rw: bool,
    pub split: Split,
    pub values: Vec<f64>,
}

impl LabeledObservation {
    pub fn label(&self, target: Target) -> bool {
        match target {
            Target::RI => self.y_ri,
            Target::RW => self.y_rw,
        }
    }
}

/// Observations sharing one ordered column list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<LabeledObservation>,
}

impl Dataset {
    pub fn subset(&self, split: Split) -> Dataset {
        Dataset {
            columns: self.columns.clone(),
            rows: self.rows.iter().filter(|r| r.split == split).cloned().collect(),
        }
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    pub fn labels(&self, target: Target) -> Vec<bool> {
        self.rows.iter().map(|r| r.label(target)).collect()
    }

    pub fn storms(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.storm_id.clone()).collect()
    }

    /// Keeps only `cols`, in the given order.
    pub fn select(&self, cols: &[String]) -> Result<Dataset, DatasetError> {
        let idx: Vec<usize> = cols
            .iter()
            .map(|c| {
                self.columns
                    .iter()
                    .position(|x| x == c)
                    .ok_or_else(|| DatasetError::UnknownColumn(c.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Dataset {
            columns: cols.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| LabeledObservation {
                    values: idx.iter().map(|&i| r.values[i]).collect(),
                    ..r.clone()
                })
                .collect(),
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DatasetError> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = vec!["storm_id", "time", "basin", "split", "y_ri", "y_rw"];
        header.extend(self.columns.iter().map(|s| s.as_str()));
        wtr.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.storm_id.clone(),
                format_time(&r.time),
                r.basin.to_string(),
                r.split.as_str().to_string(),
                (r.y_ri as u8).to_string(),
                (r.y_rw as u8).to_string(),
            ];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Dataset, DatasetError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 6 || &header[0] != "storm_id" || &header[5] != "y_rw" {
            return Err(DatasetError::Parse {
                row: 0,
                reason: "header must start with storm_id,time,basin,split,y_ri,y_rw".into(),
            });
        }
        let columns: Vec<String> = header.iter().skip(6).map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |reason: String| DatasetError::Parse { row: i + 1, reason };
            let flag = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(format!("label must be 0 or 1, got `{s}`"))),
            };
            let split = match &rec[3] {
                "train" => Split::Train,
                "test" => Split::Test,
                s => return Err(bad(format!("split must be train or test, got `{s}`"))),
            };
            let values = rec
                .iter()
                .skip(6)
                .map(|c| c.parse::<f64>().map_err(|e| bad(format!("`{c}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != columns.len() {
                return Err(bad("wrong number of cells".into()));
            }
            rows.push(LabeledObservation {
                storm_id: rec[0].to_string(),
                time: parse_time(&rec[1]).map_err(bad)?,
                basin: rec[2].parse().map_err(|e: String| bad(e))?,
                split,
                y_ri: flag(&rec[4])?,
                y_rw: flag(&rec[5])?,
                values,
            });
        }
        Ok(Dataset { columns, rows })
    }
}

// ---------------------------------------------------------------------------
// SHIPS-like table
// ---------------------------------------------------------------------------

/// Environmental predictors keyed by `(storm_id, time)`. Empty or `NaN` cells
/// are stored as missing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShipsTable {
    pub columns: Vec<String>,
    pub rows: BTreeMap<(String, DateTime<Utc>), Vec<Option<f64>>>,
}

impl ShipsTable {
    pub fn read_csv<R: Read>(r: R) -> Result<ShipsTable, DatasetError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "storm_id" || &header[1] != "time" {
            return Err(DatasetError::Parse {
                row: 0,
                reason: "header must start with storm_id,time".into(),
            });
        }
        let columns: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut rows = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |reason: String| DatasetError::Parse { row: i + 1, reason };
            let time = parse_time(&rec[1]).map_err(bad)?;
            let vals = rec
                .iter()
                .skip(2)
                .map(|c| {
                    let c = c.trim();
                    if c.is_empty() {
                        return Ok(None);
                    }
                    let v: f64 = c.parse().map_err(|e| bad(format!("`{c}`: {e}")))?;
                    Ok(v.is_finite().then_some(v))
                })
                .collect::<Result<Vec<_>, DatasetError>>()?;
            let key = (rec[0].to_string(), time);
            if rows.insert(key, vals).is_some() {
                return Err(DatasetError::DuplicateKey {
                    storm_id: rec[0].to_string(),
                    time: rec[1].to_string(),
                    source_name: "SHIPS table",
                });
            }
        }
        Ok(ShipsTable { columns, rows })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DatasetError> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["storm_id".to_string(), "time".into()];
        header.extend(self.columns.iter().cloned());
        wtr.write_record(&header)?;
        for ((storm, t), vals) in &self.rows {
            let mut rec = vec![storm.clone(), format_time(t)];
            rec.extend(vals.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AssemblyReport {
    pub requested: usize,
    pub kept: usize,
    /// Rows dropped because some source value was unavailable.
    pub dropped_missing: usize,
    /// Base variables that no source provides at all.
    pub missing_columns: Vec<String>,
    pub skipped_windows: usize,
}

pub struct AssembleInputs<'a> {
    pub predictor_set: PredictorSet,
    pub orb_counts: &'a [(Statistic, usize)],
    pub orb: &'a [OrbCoefficients],
    pub ships: &'a ShipsTable,
    pub track: &'a [TrackPoint],
    /// `(storm_id, time)` of the observations to build, typically the points
    /// passing the sample filter.
    pub sample: &'a [(String, DateTime<Utc>)],
    pub rapid_threshold: f64,
    pub split_year: i32,
}

type Series = BTreeMap<DateTime<Utc>, f64>;

/// Builds labelled observations for one predictor set.
pub fn assemble(inp: &AssembleInputs) -> Result<(Dataset, AssemblyReport), DatasetError> {
    let columns = inp.predictor_set.columns(inp.orb_counts);
    let bases = inp.predictor_set.base_variables(inp.orb_counts);

    // storm -> variable -> time series
    let mut sources: HashMap<String, HashMap<String, Series>> = HashMap::new();
    let mut available: BTreeSet<String> = BTreeSet::new();

    let mut seen = BTreeSet::new();
    for c in inp.orb {
        if !seen.insert((c.storm_id.clone(), c.time)) {
            return Err(DatasetError::DuplicateKey {
                storm_id: c.storm_id.clone(),
                time: format_time(&c.time),
                source_name: "ORB coefficients",
            });
        }
        let vars = sources.entry(c.storm_id.clone()).or_default();
        for (stat, alpha) in &c.alphas {
            for (i, a) in alpha.iter().enumerate() {
                let name = format!("{}{}", stat.as_str(), i + 1);
                available.insert(name.clone());
                vars.entry(name).or_default().insert(c.time, *a);
            }
        }
    }
    for ((storm, t), vals) in &inp.ships.rows {
        let vars = sources.entry(storm.clone()).or_default();
        for (name, v) in inp.ships.columns.iter().zip(vals) {
            available.insert(name.clone());
            if let Some(v) = v {
                vars.entry(name.clone()).or_default().insert(*t, *v);
            }
        }
    }

    let mut tracks: BTreeMap<&str, Vec<&TrackPoint>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for p in inp.track {
        if !seen.insert((p.storm_id.as_str(), p.time)) {
            return Err(DatasetError::DuplicateKey {
                storm_id: p.storm_id.clone(),
                time: format_time(&p.time),
                source_name: "track",
            });
        }
        tracks.entry(&p.storm_id).or_default().push(p);
    }
    if !tracks.is_empty() {
        available.extend(POSITION.iter().map(|s| s.to_string()));
        available.insert("V".into());
    }

    let mut needed = bases.clone();
    if inp.predictor_set == PredictorSet::SHIPS_plus_Persistence {
        needed.push("V".into());
    }
    let missing_columns: Vec<String> = needed.into_iter().filter(|b| !available.contains(b)).collect();

    struct StormInfo {
        basin: Basin,
        split: Split,
        labels: HashMap<DateTime<Utc>, (bool, bool)>,
        track_vars: HashMap<&'static str, Series>,
        skipped: usize,
    }
    let mut storms: HashMap<&str, StormInfo> = HashMap::new();
    for (storm, pts) in tracks.iter_mut() {
        pts.sort_by_key(|p| p.time);
        let synoptic: Vec<&TrackPoint> = pts
            .iter()
            .copied()
            .filter(|p| p.time.minute() == 0 && p.time.second() == 0 && p.time.hour() % 6 == 0)
            .collect();
        let times: Vec<DateTime<Utc>> = synoptic.iter().map(|p| p.time).collect();
        let vmax: Vec<f64> = synoptic.iter().map(|p| p.intensity).collect();
        let lab = label_rapid_change(&times, &vmax, inp.rapid_threshold)?;
        let mut track_vars: HashMap<&'static str, Series> = HashMap::new();
        for p in pts.iter() {
            track_vars.entry("LAT").or_default().insert(p.time, p.lat);
            track_vars.entry("LON").or_default().insert(p.time, p.lon);
            track_vars.entry("V").or_default().insert(p.time, p.intensity);
        }
        storms.insert(
            storm,
            StormInfo {
                basin: pts[0].basin,
                split: Split::for_storm_start(pts[0].time, inp.split_year),
                labels: times
                    .iter()
                    .enumerate()
                    .map(|(i, t)| (*t, (lab.y_ri[i], lab.y_rw[i])))
                    .collect(),
                track_vars,
                skipped: lab.skipped_windows,
            },
        );
    }

    let mut sample: Vec<&(String, DateTime<Utc>)> = inp.sample.iter().collect();
    sample.sort();
    sample.dedup();
    let empty = HashMap::new();
    let build = |(storm, t): &(String, DateTime<Utc>)| -> Option<LabeledObservation> {
        let info = storms.get(storm.as_str())?;
        let &(y_ri, y_rw) = info.labels.get(t)?;
        let vars = sources.get(storm).unwrap_or(&empty);
        let lookup = |name: &str| -> Option<&Series> {
            info.track_vars.get(name).or_else(|| vars.get(name))
        };
        let mut values = Vec::with_capacity(columns.len());
        for b in &bases {
            values.extend(lagged_values(lookup(b)?, *t)?);
        }
        if inp.predictor_set == PredictorSet::SHIPS_plus_Persistence {
            values.extend(persistence_values(lookup("V")?, *t)?);
        }
        Some(LabeledObservation {
            storm_id: storm.clone(),
            time: *t,
            basin: info.basin,
            y_ri,
            y_rw,
            split: info.split,
            values,
        })
    };
    let rows: Vec<LabeledObservation> = sample.par_iter().filter_map(|k| build(k)).collect();

    let report = AssemblyReport {
        requested: sample.len(),
        kept: rows.len(),
        dropped_missing: sample.len() - rows.len(),
        missing_columns,
        skipped_windows: storms.values().map(|s| s.skipped).sum(),
    };
    if report.dropped_missing > 0 {
        log::info!("assemble: dropped {} of {} rows with missing inputs", report.dropped_missing, report.requested);
    }
    Ok((Dataset { columns, rows }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn hours(h: &[i64]) -> Vec<DateTime<Utc>> {
        let t0 = Utc.with_ymd_and_hms(2005, 8, 20, 0, 0, 0).unwrap();
        h.iter().map(|h| t0 + Duration::hours(*h)).collect()
    }

    #[test]
    fn steady_ramp_labels_every_point() {
        let l = label_rapid_change(&hours(&[0, 6, 12, 18, 24]), &[50.0, 55.0, 60.0, 70.0, 80.0], 25.0).unwrap();
        assert!(l.y_ri.iter().all(|&y| y));
        assert!(l.y_rw.iter().all(|&y| !y));
    }

    #[test]
    fn isolated_window_labels_five_points() {
        let v = [60.0, 60.0, 60.0, 65.0, 70.0, 75.0, 85.0, 85.0, 85.0, 85.0];
        let t = hours(&(0..10).map(|i| 6 * i).collect::<Vec<_>>());
        let l = label_rapid_change(&t, &v, 25.0).unwrap();
        let expect = [false, false, true, true, true, true, true, false, false, false];
        assert_eq!(l.y_ri, expect);
    }

    #[test]
    fn gap_windows_are_skipped() {
        let l = label_rapid_change(&hours(&[0, 6, 12, 24, 30, 36]), &[50.0, 50.0, 50.0, 90.0, 90.0, 90.0], 25.0).unwrap();
        assert!(l.y_ri.iter().all(|&y| !y));
        assert_eq!(l.skipped_windows, 3);
    }

    #[test]
    fn events_are_runs() {
        assert_eq!(count_events(&[false, true, true, false, true]), 2);
        assert_eq!(count_events(&[false; 4]), 0);
    }

    #[test]
    fn lag_arithmetic() {
        let t = hours(&[0, 6, 12, 18, 24]);
        let l = add_lags(&t, &[("v", vec![10.0, 12.0, 15.0, 19.0, 24.0])]);
        assert_eq!(l.columns, ["v", "D6_v", "D12_v", "D24_v"]);
        assert_eq!(l.rows, vec![vec![24.0, 5.0, 9.0, 14.0]]);
        let v: BTreeMap<_, _> = t.iter().copied().zip([10.0, 12.0, 15.0, 19.0, 24.0]).collect();
        assert_eq!(persistence_values(&v, t[4]), Some([24.0, 5.0, 4.0]));
    }

    #[test]
    fn predictor_set_widths() {
        let w: Vec<usize> = PredictorSet::ALL.iter().map(|p| p.columns(&ORB_COUNTS).len()).collect();
        assert_eq!(w, [48, 68, 116, 51]);
        assert!(matches!(
            "SHIPS_and_stuff".parse::<PredictorSet>(),
            Err(DatasetError::UnknownPredictorSet(_))
        ));
    }

    #[test]
    fn empty_ships_table_reports_missing_columns() {
        let track: Vec<TrackPoint> = (0..8)
            .map(|i| TrackPoint {
                storm_id: "S1".into(),
                time: hours(&[6 * i])[0],
                lat: 20.0,
                lon: -60.0,
                intensity: 60.0,
                dist_to_land: 900.0,
                basin: Basin::NAL,
            })
            .collect();
        let sample: Vec<_> = track.iter().map(|p| (p.storm_id.clone(), p.time)).collect();
        let (ds, rep) = assemble(&AssembleInputs {
            predictor_set: PredictorSet::SHIPS_only,
            orb_counts: &ORB_COUNTS,
            orb: &[],
            ships: &ShipsTable::default(),
            track: &track,
            sample: &sample,
            rapid_threshold: 25.0,
            split_year: 2010,
        })
        .unwrap();
        assert!(ds.rows.is_empty());
        assert_eq!(ds.columns.len(), 48);
        assert_eq!(rep.missing_columns, SHIPS_ENV.to_vec());
        assert_eq!(rep.dropped_missing, 8);
    }

    #[test]
    fn dataset_csv_round_trip() {
        let ds = Dataset {
            columns: vec!["a".into(), "b".into()],
            rows: vec![LabeledObservation {
                storm_id: "S".into(),
                time: hours(&[0])[0],
                basin: Basin::ENP,
                y_ri: true,
                y_rw: false,
                split: Split::Test,
                values: vec![0.1, -2.5e-7],
            }],
        };
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), ds);
    }
}
