//! Level-set morphology: SIZE, SKEW, SHAPE and ECC as functions of the
//! temperature threshold.
//!
//! Every pixel enters `L(c)` at the first threshold `c >= T_b`, and sits on
//! the boundary of `L(c)` for `T_b <= c < max(4-neighbours)` (masked and
//! off-grid neighbours count as +inf). Accumulating each pixel's moments into
//! difference arrays over the threshold grid gives all thresholds in one pass.

use crate::numeric::{fill_undefined, ExactSum};
use crate::stamp::{compass_azimuth, Stamp};

use super::{Axis, FeatureConfig, FeatureError, OrbFunction, Statistic, StormCenter};

/// Indices of non-masked pixels with `T_b <= c`, in row-major order.
pub fn level_set(stamp: &Stamp, c: f64) -> Vec<usize> {
    stamp
        .tb()
        .iter()
        .zip(stamp.mask())
        .enumerate()
        .filter(|(_, (&v, &m))| !m && v as f64 <= c)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone)]
pub struct BulkFunctions {
    pub size: OrbFunction,
    pub skew: OrbFunction,
    pub shape: OrbFunction,
    pub ecc: OrbFunction,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: i64,
    sc: i64,
    sr: i64,
    scc: i64,
    srr: i64,
    scr: i64,
    sd: ExactSum,
    nb: i64,
    sdb: ExactSum,
}

fn max_neighbour(stamp: &Stamp, row: usize, col: usize) -> f64 {
    let side = stamp.side();
    let mut m = f64::NEG_INFINITY;
    let neighbours = [
        (row.wrapping_sub(1), col),
        (row + 1, col),
        (row, col.wrapping_sub(1)),
        (row, col + 1),
    ];
    for (r, c) in neighbours {
        if r >= side || c >= side {
            return f64::INFINITY;
        }
        match stamp.value(r, c) {
            None => return f64::INFINITY,
            Some(v) => m = m.max(v as f64),
        }
    }
    m
}

/// Index of the first threshold `>= v` on an evenly spaced grid; a guess
/// from the spacing is corrected to match a binary search exactly.
#[inline]
fn first_at_least(thresholds: &[f64], v: f64) -> usize {
    let n = thresholds.len();
    if n < 2 || !v.is_finite() {
        return thresholds.partition_point(|&c| c < v);
    }
    let step = thresholds[1] - thresholds[0];
    let mut k = ((v - thresholds[0]) / step).ceil().clamp(0.0, n as f64) as usize;
    while k > 0 && thresholds[k - 1] >= v {
        k -= 1;
    }
    while k < n && thresholds[k] < v {
        k += 1;
    }
    k
}

/// Second moments of pixel coordinates (km²) → eccentricity `1 - λ2/λ1`.
pub(crate) fn eccentricity(n: i64, sc: i64, sr: i64, scc: i64, srr: i64, scr: i64, dx: f64, dy: f64) -> Option<f64> {
    let (n, sc, sr) = (n as i128, sc as i128, sr as i128);
    let nn = (n * n) as f64;
    let var_c = (n * scc as i128 - sc * sc) as f64 / nn;
    let var_r = (n * srr as i128 - sr * sr) as f64 / nn;
    let cov = (n * scr as i128 - sc * sr) as f64 / nn;
    let sxx = var_c * dx * dx;
    let syy = var_r * dy * dy;
    // rows increase southward
    let sxy = -cov * dx * dy;
    let half_tr = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy).sqrt();
    let l1 = half_tr + disc;
    let l2 = half_tr - disc;
    (l1 > 0.0).then(|| (1.0 - l2 / l1).clamp(0.0, 1.0))
}

pub fn bulk_morphology(
    stamp: &Stamp,
    center: &StormCenter,
    cfg: &FeatureConfig,
) -> Result<BulkFunctions, FeatureError> {
    center.check(stamp)?;
    let frame = stamp.frame()?;
    let thresholds = cfg.temperature_grid();
    let nt = thresholds.len();
    let side = stamp.side();

    let mut diff = vec![Moments::default(); nt + 1];
    for row in 0..side {
        for col in 0..side {
            let Some(v) = stamp.value(row, col) else {
                continue;
            };
            let v = v as f64;
            let k0 = first_at_least(&thresholds, v);
            if k0 == nt {
                continue;
            }
            let (x, y) = frame.offset_km(row, col, center.row, center.col);
            let d = x.hypot(y);
            let (ci, ri) = (col as i64, row as i64);
            let m = &mut diff[k0];
            m.n += 1;
            m.sc += ci;
            m.sr += ri;
            m.scc += ci * ci;
            m.srr += ri * ri;
            m.scr += ci * ri;
            m.sd.add(d);

            let k1 = first_at_least(&thresholds, max_neighbour(stamp, row, col));
            if k1 > k0 {
                diff[k0].nb += 1;
                diff[k0].sdb.add(d);
                diff[k1].nb -= 1;
                diff[k1].sdb -= ExactSum::from_iter([d]);
            }
        }
    }

    let area = frame.pixel_area_km2();
    let mut size = Vec::with_capacity(nt);
    let mut skew = vec![0.0; nt];
    let mut skew_dir = vec![f64::NAN; nt];
    let mut shape = vec![0.0; nt];
    let mut ecc = vec![0.0; nt];
    let mut skew_ok = vec![false; nt];
    let mut shape_ok = vec![false; nt];
    let mut ecc_ok = vec![false; nt];

    let mut acc = Moments::default();
    for k in 0..nt {
        let m = diff[k];
        acc.n += m.n;
        acc.sc += m.sc;
        acc.sr += m.sr;
        acc.scc += m.scc;
        acc.srr += m.srr;
        acc.scr += m.scr;
        acc.sd += m.sd;
        acc.nb += m.nb;
        acc.sdb += m.sdb;

        size.push(acc.n as f64 * area);
        if (acc.n as usize) < cfg.n_min.max(1) {
            continue;
        }
        let nf = acc.n as f64;
        let mean_d = acc.sd.value() / nf;
        if mean_d > 0.0 {
            let x = (acc.sc as f64 / nf - center.col) * frame.dx_km;
            let y = (center.row - acc.sr as f64 / nf) * frame.dy_km;
            skew[k] = (x.hypot(y) / mean_d).min(1.0);
            skew_dir[k] = compass_azimuth(x, y);
            skew_ok[k] = true;
            if acc.nb > 0 {
                shape[k] = (acc.sdb.value() / acc.nb as f64) / mean_d;
                shape_ok[k] = true;
            }
        }
        if let Some(e) = eccentricity(acc.n, acc.sc, acc.sr, acc.scc, acc.srr, acc.scr, frame.dx_km, frame.dy_km) {
            ecc[k] = e;
            ecc_ok[k] = true;
        }
    }
    fill_undefined(&thresholds, &mut skew, &skew_ok);
    fill_undefined(&thresholds, &mut shape, &shape_ok);
    fill_undefined(&thresholds, &mut ecc, &ecc_ok);

    let mk = |statistic, values, defined, dir| OrbFunction {
        statistic,
        axis: Axis::TemperatureC,
        thresholds: thresholds.clone(),
        values,
        defined,
        skew_direction: dir,
    };
    Ok(BulkFunctions {
        size: mk(Statistic::SIZE, size, vec![true; nt], None),
        skew: mk(Statistic::SKEW, skew, skew_ok, Some(skew_dir)),
        shape: mk(Statistic::SHAPE, shape, shape_ok, None),
        ecc: mk(Statistic::ECC, ecc, ecc_ok, None),
    })
}

pub fn size_fn(stamp: &Stamp, center: &StormCenter, cfg: &FeatureConfig) -> Result<OrbFunction, FeatureError> {
    Ok(bulk_morphology(stamp, center, cfg)?.size)
}

pub fn skew_fn(stamp: &Stamp, center: &StormCenter, cfg: &FeatureConfig) -> Result<OrbFunction, FeatureError> {
    Ok(bulk_morphology(stamp, center, cfg)?.skew)
}

pub fn shape_fn(stamp: &Stamp, center: &StormCenter, cfg: &FeatureConfig) -> Result<OrbFunction, FeatureError> {
    Ok(bulk_morphology(stamp, center, cfg)?.shape)
}

pub fn ecc_fn(stamp: &Stamp, center: &StormCenter, cfg: &FeatureConfig) -> Result<OrbFunction, FeatureError> {
    Ok(bulk_morphology(stamp, center, cfg)?.ecc)
}
