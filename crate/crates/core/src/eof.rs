//! Empirical orthogonal functions: per-basin PCA of ORB functions, projection
//! onto the leading components, and smoothing of coefficient time series.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{OrbFunction, Statistic};
use crate::stamp::{format_time, parse_time, Basin};

#[derive(Debug, Error)]
pub enum EofError {
    #[error("need at least 2 curves to fit a basis, got {0}")]
    TooFewCurves(usize),
    #[error("curve {index} has {found} values, expected {expected}")]
    GridMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("curve {index} contains a non-finite value")]
    NonFinite { index: usize },
    #[error("degenerate data: all curves are identical, no component carries variance")]
    Degenerate,
    #[error("rank {rank} is below the {requested} components requested")]
    RankDeficient { rank: usize, requested: usize },
    #[error("variance target must lie in (0, 1], got {0}")]
    BadTarget(f64),
    #[error("expected {expected} coefficients, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("series needs at least 3 points, got {0}")]
    SeriesTooShort(usize),
    #[error("bad coefficient file: {0}")]
    Parse(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentCount {
    /// Smallest K whose cumulative explained variance reaches the fraction.
    VarianceTarget(f64),
    Fixed(usize),
}

impl Default for ComponentCount {
    fn default() -> Self {
        ComponentCount::VarianceTarget(0.9)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EofBasis {
    pub statistic: Statistic,
    pub basin: Basin,
    pub thresholds: Vec<f64>,
    pub mean_curve: Vec<f64>,
    /// K orthonormal rows of length d.
    pub eofs: Vec<Vec<f64>>,
    /// Fraction of total variance per retained component.
    pub explained_variance: Vec<f64>,
    /// Covariance eigenvalues `a_i^2 / n` per retained component.
    pub eigenvalues: Vec<f64>,
    pub n_samples: usize,
}

impl EofBasis {
    pub fn k(&self) -> usize {
        self.eofs.len()
    }

    pub fn dim(&self) -> usize {
        self.mean_curve.len()
    }

    pub fn to_json(&self) -> Result<String, EofError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<EofBasis, EofError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Flips `v` so its largest-magnitude entry (first one on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Fits EOFs to `curves` (n rows on a shared grid of `thresholds`).
///
/// The column mean is removed and the centred matrix decomposed by SVD; the
/// right singular vectors are the EOFs and `a_i^2 / sum a_j^2` their explained
/// variance fractions.
pub fn fit_basis(
    statistic: Statistic,
    basin: Basin,
    thresholds: &[f64],
    curves: &[Vec<f64>],
    count: ComponentCount,
) -> Result<EofBasis, EofError> {
    let n = curves.len();
    if n < 2 {
        return Err(EofError::TooFewCurves(n));
    }
    let d = thresholds.len();
    for (index, c) in curves.iter().enumerate() {
        if c.len() != d {
            return Err(EofError::GridMismatch {
                index,
                expected: d,
                found: c.len(),
            });
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(EofError::NonFinite { index });
        }
    }
    if let ComponentCount::VarianceTarget(t) = count {
        if !(t > 0.0 && t <= 1.0) {
            return Err(EofError::BadTarget(t));
        }
    }

    let mut mean_curve = vec![0.0; d];
    for c in curves {
        for (m, v) in mean_curve.iter_mut().zip(c) {
            *m += v;
        }
    }
    mean_curve.iter_mut().for_each(|m| *m /= n as f64);

    let z = DMatrix::from_fn(n, d, |i, j| curves[i][j] - mean_curve[j]);
    let svd = z.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sv = &svd.singular_values;

    let sq: Vec<f64> = sv.iter().map(|a| a * a).collect();
    let total: f64 = sq.iter().sum();
    let s_max = sv.iter().cloned().fold(0.0, f64::max);
    let tol = n.max(d) as f64 * f64::EPSILON * s_max;
    let rank = sv.iter().filter(|&&a| a > tol).count();
    if rank == 0 || total <= 0.0 {
        return Err(EofError::Degenerate);
    }

    let k = match count {
        ComponentCount::Fixed(k) => {
            if k > rank {
                return Err(EofError::RankDeficient { rank, requested: k });
            }
            k
        }
        ComponentCount::VarianceTarget(t) => {
            let mut cum = 0.0;
            let mut k = rank;
            for (i, s) in sq.iter().enumerate().take(rank) {
                cum += s / total;
                // tolerate rounding in the running sum
                if cum >= t - 1e-12 {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };

    let mut eofs = Vec::with_capacity(k);
    for i in 0..k {
        let mut row: Vec<f64> = v_t.row(i).iter().cloned().collect();
        fix_sign(&mut row);
        eofs.push(row);
    }
    Ok(EofBasis {
        statistic,
        basin,
        thresholds: thresholds.to_vec(),
        mean_curve,
        eofs,
        explained_variance: sq[..k].iter().map(|s| s / total).collect(),
        eigenvalues: sq[..k].iter().map(|s| s / n as f64).collect(),
        n_samples: n,
    })
}

/// ORB coefficients `alpha_i = <curve - mean, eof_i>`.
pub fn project(curve: &[f64], basis: &EofBasis) -> Result<Vec<f64>, EofError> {
    if curve.len() != basis.dim() {
        return Err(EofError::GridMismatch {
            index: 0,
            expected: basis.dim(),
            found: curve.len(),
        });
    }
    Ok(basis
        .eofs
        .iter()
        .map(|e| {
            e.iter()
                .zip(curve.iter().zip(&basis.mean_curve))
                .map(|(w, (v, m))| w * (v - m))
                .sum()
        })
        .collect())
}

/// Projects an ORB function, checking it was sampled on the basis grid.
pub fn project_function(f: &OrbFunction, basis: &EofBasis) -> Result<Vec<f64>, EofError> {
    let same_grid = f.thresholds.len() == basis.thresholds.len()
        && f
            .thresholds
            .iter()
            .zip(&basis.thresholds)
            .all(|(a, b)| (a - b).abs() <= 1e-9 * b.abs().max(1.0));
    if f.statistic != basis.statistic || !same_grid {
        return Err(EofError::GridMismatch {
            index: 0,
            expected: basis.dim(),
            found: f.thresholds.len(),
        });
    }
    project(&f.values, basis)
}

/// `mean + sum alpha_i eof_i`.
pub fn reconstruct(alpha: &[f64], basis: &EofBasis) -> Result<Vec<f64>, EofError> {
    if alpha.len() != basis.k() {
        return Err(EofError::LengthMismatch {
            expected: basis.k(),
            found: alpha.len(),
        });
    }
    let mut out = basis.mean_curve.clone();
    for (a, e) in alpha.iter().zip(&basis.eofs) {
        for (o, w) in out.iter_mut().zip(e) {
            *o += a * w;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Smoothing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub values: Vec<f64>,
    /// EWMA weight on the newest observation; 1 means no smoothing.
    pub weight: f64,
    /// Roughness of `values`, in units of the raw series sd per hour².
    pub roughness: f64,
    /// False when the raw series was already at or below the target.
    pub target_reached: bool,
}

/// Mean absolute second central difference divided by `dt^2`.
pub fn roughness(x: &[f64], dt_hours: f64) -> f64 {
    if x.len() < 3 {
        return 0.0;
    }
    let s: f64 = x.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).abs()).sum();
    s / (x.len() - 2) as f64 / (dt_hours * dt_hours)
}

pub fn ewma(x: &[f64], weight: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut s = 0.0;
    for (i, &v) in x.iter().enumerate() {
        s = if i == 0 { v } else { weight * v + (1.0 - weight) * s };
        out.push(s);
    }
    out
}

/// Causal EWMA whose weight is chosen by bisection so the smoothed series has
/// roughness `target` (in raw-series standard deviations per hour²).
pub fn smooth_series(x: &[f64], dt_hours: f64, target: f64) -> Result<Smoothed, EofError> {
    if x.len() < 3 {
        return Err(EofError::SeriesTooShort(x.len()));
    }
    let sd = crate::numeric::population_sd(x);
    let rough = |v: &[f64]| if sd > 0.0 { roughness(v, dt_hours) / sd } else { 0.0 };
    let raw = rough(x);
    if raw <= target {
        return Ok(Smoothed {
            values: x.to_vec(),
            weight: 1.0,
            roughness: raw,
            target_reached: false,
        });
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rough(&ewma(x, mid)) > target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let weight = 0.5 * (lo + hi);
    let values = ewma(x, weight);
    Ok(Smoothed {
        roughness: rough(&values),
        values,
        weight,
        target_reached: true,
    })
}

/// Smooths each coefficient of an hourly-or-coarser α series independently.
pub fn smooth_coefficients(series: &[Vec<f64>], dt_hours: f64, target: f64) -> Result<Vec<Smoothed>, EofError> {
    let k = series.first().map_or(0, |r| r.len());
    (0..k)
        .map(|i| {
            let col: Vec<f64> = series.iter().map(|r| r[i]).collect();
            smooth_series(&col, dt_hours, target)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Coefficient tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct OrbCoefficients {
    pub storm_id: String,
    pub time: DateTime<Utc>,
    pub alphas: BTreeMap<Statistic, Vec<f64>>,
}

/// Writes `storm_id,time,stat,alpha_1..alpha_K`, one line per statistic;
/// statistics with fewer than the widest K leave trailing cells empty.
pub fn write_coefficients_csv<W: Write>(w: W, rows: &[OrbCoefficients]) -> Result<(), EofError> {
    let width = rows
        .iter()
        .flat_map(|r| r.alphas.values().map(|a| a.len()))
        .max()
        .unwrap_or(0);
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["storm_id".to_string(), "time".into(), "stat".into()];
    header.extend((1..=width).map(|i| format!("alpha_{i}")));
    wtr.write_record(&header)?;
    for r in rows {
        for (stat, a) in &r.alphas {
            let mut rec = vec![r.storm_id.clone(), format_time(&r.time), stat.to_string()];
            rec.extend(a.iter().map(|v| v.to_string()));
            rec.resize(3 + width, String::new());
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_coefficients_csv<R: Read>(r: R) -> Result<Vec<OrbCoefficients>, EofError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out: Vec<OrbCoefficients> = Vec::new();
    let mut index: BTreeMap<(String, DateTime<Utc>), usize> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| EofError::Parse(format!("row {}: {what}", line + 1));
        let storm = rec.get(0).ok_or_else(|| bad("missing storm_id"))?.to_string();
        let time = parse_time(rec.get(1).ok_or_else(|| bad("missing time"))?).map_err(|e| bad(&e))?;
        let stat: Statistic = rec.get(2).ok_or_else(|| bad("missing stat"))?.parse().map_err(|e: String| bad(&e))?;
        let mut alpha = Vec::new();
        for cell in rec.iter().skip(3) {
            if cell.is_empty() {
                break;
            }
            alpha.push(cell.parse::<f64>().map_err(|e| bad(&e.to_string()))?);
        }
        let i = *index.entry((storm.clone(), time)).or_insert_with(|| {
            out.push(OrbCoefficients {
                storm_id: storm,
                time,
                alphas: BTreeMap::new(),
            });
            out.len() - 1
        });
        if out[i].alphas.insert(stat, alpha).is_some() {
            return Err(bad("duplicate (storm_id, time, stat)"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn grid(d: usize) -> Vec<f64> {
        (0..d).map(|i| i as f64).collect()
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let curves = vec![vec![1.0, 2.0, 3.0]; 5];
        let err = fit_basis(Statistic::RAD, Basin::NAL, &grid(3), &curves, ComponentCount::default());
        assert!(matches!(err, Err(EofError::Degenerate)));
    }

    #[test]
    fn rank_one_family() {
        let g = [1.0, -2.0, 0.5, 3.0];
        let m = [10.0, 11.0, 12.0, 13.0];
        let curves: Vec<Vec<f64>> = (0..7)
            .map(|t| m.iter().zip(&g).map(|(a, b)| a + (t as f64 - 3.0) * b).collect())
            .collect();
        let b = fit_basis(Statistic::RAD, Basin::NAL, &grid(4), &curves, ComponentCount::default()).unwrap();
        assert_eq!(b.k(), 1);
        assert!((b.explained_variance[0] - 1.0).abs() < 1e-12);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (e, gv) in b.eofs[0].iter().zip(&g) {
            assert!((e - gv / norm).abs() < 1e-12);
        }
        for (a, b) in b.mean_curve.iter().zip(&m) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            fit_basis(Statistic::RAD, Basin::NAL, &grid(4), &curves, ComponentCount::Fixed(2)),
            Err(EofError::RankDeficient { rank: 1, requested: 2 })
        ));
    }

    #[test]
    fn projection_of_mean_and_unit_offsets() {
        let curves = vec![
            vec![0.0, 1.0, 0.0],
            vec![2.0, 0.0, 1.0],
            vec![1.0, 3.0, -1.0],
            vec![0.5, 0.5, 2.0],
        ];
        let b = fit_basis(Statistic::SIZE, Basin::ENP, &grid(3), &curves, ComponentCount::Fixed(2)).unwrap();
        assert!(project(&b.mean_curve, &b).unwrap().iter().all(|a| a.abs() < 1e-15));
        let shifted: Vec<f64> = b.mean_curve.iter().zip(&b.eofs[0]).map(|(m, e)| m + 2.0 * e).collect();
        let a = project(&shifted, &b).unwrap();
        assert!((a[0] - 2.0).abs() < 1e-12 && a[1].abs() < 1e-12);
        assert_eq!(reconstruct(&[0.0, 0.0], &b).unwrap(), b.mean_curve);
        assert!(reconstruct(&[1.0], &b).is_err());
        assert!(project(&[1.0], &b).is_err());
    }

    #[test]
    fn basis_json_round_trip_is_exact() {
        let curves = vec![vec![0.1, 0.7], vec![0.3, -0.2], vec![1.0 / 3.0, 0.0]];
        let b = fit_basis(Statistic::ECC, Basin::NAL, &grid(2), &curves, ComponentCount::Fixed(2)).unwrap();
        assert_eq!(EofBasis::from_json(&b.to_json().unwrap()).unwrap(), b);
    }

    #[test]
    fn constant_series_is_left_alone() {
        let s = smooth_series(&[3.0; 10], 1.0, 0.2).unwrap();
        assert_eq!(s.values, vec![3.0; 10]);
        assert!(!s.target_reached);
    }

    #[test]
    fn step_series_gets_smoother() {
        let x: Vec<f64> = (0..40).map(|i| if i < 20 { 0.0 } else { 1.0 }).collect();
        let s = smooth_series(&x, 1.0, 0.02).unwrap();
        assert!(s.roughness <= roughness(&x, 1.0) / crate::numeric::population_sd(&x));
    }

    #[test]
    fn sinusoid_reaches_target() {
        let x: Vec<f64> = (0..200)
            .map(|i| (i as f64 * 2.0 * std::f64::consts::PI / 24.0).sin() + 0.5 * (i as f64 * 1.3).sin())
            .collect();
        let s = smooth_series(&x, 1.0, 0.2).unwrap();
        assert!(s.target_reached);
        assert!((s.roughness - 0.2).abs() <= 0.01, "{}", s.roughness);
    }

    #[test]
    fn coefficient_csv_round_trip() {
        let t = Utc.with_ymd_and_hms(2005, 8, 25, 6, 0, 0).unwrap();
        let mut alphas = BTreeMap::new();
        alphas.insert(Statistic::SIZE, vec![1.5, -0.25]);
        alphas.insert(Statistic::RAD, vec![0.1, 0.2, 1e-300]);
        let rows = vec![OrbCoefficients {
            storm_id: "AL122005".into(),
            time: t,
            alphas,
        }];
        let mut buf = Vec::new();
        write_coefficients_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("storm_id,time,stat,alpha_1,alpha_2,alpha_3\n"));
        assert_eq!(read_coefficients_csv(buf.as_slice()).unwrap(), rows);
    }
}
