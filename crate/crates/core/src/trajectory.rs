//! Phase-space trajectories of one storm's ORB coefficients and their
//! dominant period.

use std::io::Write;

use chrono::{DateTime, Duration, Utc};
use rustfft::{num_complex::Complex, FftPlanner};
use thiserror::Error;

use crate::eof::{smooth_coefficients, EofError, OrbCoefficients};
use crate::features::Statistic;
use crate::stamp::format_time;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("no coefficients for storm `{0}`")]
    UnknownStorm(String),
    #[error("storm `{storm}` has no {statistic} coefficients")]
    MissingStatistic { storm: String, statistic: Statistic },
    #[error("trajectory needs at least 3 times, got {0}")]
    TooShort(usize),
    #[error("times must be evenly spaced; found steps of {0} and {1} minutes")]
    Uneven(i64, i64),
    #[error(transparent)]
    Eof(#[from] EofError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub storm_id: String,
    pub statistic: Statistic,
    pub dt_hours: f64,
    pub times: Vec<DateTime<Utc>>,
    pub raw: Vec<Vec<f64>>,
    pub smoothed: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Component `i` over time.
    pub fn component(&self, i: usize, smoothed: bool) -> Vec<f64> {
        let rows = if smoothed { &self.smoothed } else { &self.raw };
        rows.iter().map(|r| r[i]).collect()
    }

    /// Writes `time,alpha_1..alpha_K,smooth_alpha_1..smooth_alpha_K`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TrajectoryError> {
        let mut out = csv::Writer::from_writer(w);
        let k = self.raw.first().map_or(0, |r| r.len());
        let mut header = vec!["time".to_string()];
        header.extend((1..=k).map(|i| format!("alpha_{i}")));
        header.extend((1..=k).map(|i| format!("smooth_alpha_{i}")));
        out.write_record(&header).map_err(csv_io)?;
        for ((t, r), s) in self.times.iter().zip(&self.raw).zip(&self.smoothed) {
            let mut rec = vec![format_time(t)];
            rec.extend(r.iter().chain(s).map(|v| v.to_string()));
            out.write_record(&rec).map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> TrajectoryError {
    TrajectoryError::Io(std::io::Error::other(e))
}

/// Collects one storm's coefficients for `statistic` in time order and
/// smooths each component to `roughness_target`.
pub fn build_trajectory(
    coefficients: &[OrbCoefficients],
    storm_id: &str,
    statistic: Statistic,
    roughness_target: f64,
) -> Result<Trajectory, TrajectoryError> {
    let mut rows: Vec<&OrbCoefficients> = coefficients.iter().filter(|c| c.storm_id == storm_id).collect();
    if rows.is_empty() {
        return Err(TrajectoryError::UnknownStorm(storm_id.into()));
    }
    rows.sort_by_key(|c| c.time);
    if rows.len() < 3 {
        return Err(TrajectoryError::TooShort(rows.len()));
    }
    let step = rows[1].time - rows[0].time;
    if let Some(w) = rows.windows(2).find(|w| w[1].time - w[0].time != step) {
        return Err(TrajectoryError::Uneven(
            step.num_minutes(),
            (w[1].time - w[0].time).num_minutes(),
        ));
    }
    let raw: Vec<Vec<f64>> = rows
        .iter()
        .map(|c| {
            c.alphas.get(&statistic).cloned().ok_or_else(|| TrajectoryError::MissingStatistic {
                storm: storm_id.into(),
                statistic,
            })
        })
        .collect::<Result<_, _>>()?;
    let dt_hours = step.num_seconds() as f64 / Duration::hours(1).num_seconds() as f64;
    let smooth = smooth_coefficients(&raw, dt_hours, roughness_target)?;
    let smoothed = (0..raw.len())
        .map(|t| smooth.iter().map(|s| s.values[t]).collect())
        .collect();
    Ok(Trajectory {
        storm_id: storm_id.into(),
        statistic,
        dt_hours,
        times: rows.iter().map(|c| c.time).collect(),
        raw,
        smoothed,
    })
}

/// Period (in units of `dt`) of the largest periodogram peak of the
/// mean-removed series, searched over frequencies `1..=n/2`. `None` for a
/// constant or too-short series.
pub fn dominant_period(x: &[f64], dt: f64) -> Option<f64> {
    let n = x.len();
    if n < 4 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (k, power) = (1..=n / 2)
        .map(|k| (k, buf[k].norm_sqr()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    (power > 0.0).then(|| n as f64 * dt / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use std::collections::BTreeMap;

    #[test]
    fn sinusoid_period() {
        let x: Vec<f64> = (0..96).map(|t| (2.0 * std::f64::consts::PI * t as f64 / 24.0).sin()).collect();
        assert_eq!(dominant_period(&x, 1.0), Some(24.0));
        assert_eq!(dominant_period(&[3.0; 10], 1.0), None);
    }

    #[test]
    fn constant_storm_is_a_single_point() {
        let t0 = Utc.with_ymd_and_hms(2012, 9, 1, 0, 0, 0).unwrap();
        let coeffs: Vec<OrbCoefficients> = (0..10)
            .map(|h| OrbCoefficients {
                storm_id: "AL01".into(),
                time: t0 + Duration::hours(h),
                alphas: BTreeMap::from([(Statistic::SIZE, vec![1.5, -2.0])]),
            })
            .collect();
        let tr = build_trajectory(&coeffs, "AL01", Statistic::SIZE, 0.2).unwrap();
        assert!(tr.smoothed.iter().all(|r| r == &vec![1.5, -2.0]));
        assert!(matches!(
            build_trajectory(&coeffs, "AL02", Statistic::SIZE, 0.2),
            Err(TrajectoryError::UnknownStorm(_))
        ));
        assert!(build_trajectory(&coeffs, "AL01", Statistic::DAV, 0.2).is_err());
    }
}
