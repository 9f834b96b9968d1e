use crate::numeric::{fill_undefined, ExactSum};
use crate::stamp::Stamp;

use super::{Axis, FeatureConfig, FeatureError, OrbFunction, Statistic, StormCenter};

/// Index `k` of the annulus `[t_k, t_k + step)` containing `d`, if any.
#[inline]
pub(crate) fn annulus_index(d: f64, thresholds: &[f64], step: f64) -> Option<usize> {
    let n = thresholds.len();
    let mut k = (d / step).floor().max(0.0) as usize;
    k = k.min(n - 1);
    while k > 0 && d < thresholds[k] {
        k -= 1;
    }
    while k + 1 < n && d >= thresholds[k] + step {
        k += 1;
    }
    (d >= thresholds[k] && d < thresholds[k] + step).then_some(k)
}

/// Azimuthally averaged temperature: mean non-masked T_b over each annulus
/// `[r, r + Δr)` from 0 to the configured outer radius. Empty annuli are
/// interpolated from their neighbours and flagged undefined.
pub fn radial_profile(
    stamp: &Stamp,
    center: &StormCenter,
    cfg: &FeatureConfig,
) -> Result<OrbFunction, FeatureError> {
    center.check(stamp)?;
    let frame = stamp.frame()?;
    let thresholds = cfg.rad_grid(stamp.grid_step());
    let step = thresholds[1] - thresholds[0];
    let side = stamp.side();

    let mut sums = vec![ExactSum::ZERO; thresholds.len()];
    let mut counts = vec![0usize; thresholds.len()];
    for row in 0..side {
        for col in 0..side {
            let Some(v) = stamp.value(row, col) else {
                continue;
            };
            let (x, y) = frame.offset_km(row, col, center.row, center.col);
            if let Some(k) = annulus_index(x.hypot(y), &thresholds, step) {
                sums[k].add(v as f64);
                counts[k] += 1;
            }
        }
    }
    let defined: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
    let empty = defined.iter().filter(|d| !**d).count();
    if empty as f64 > cfg.max_empty_annuli_frac * thresholds.len() as f64 {
        return Err(FeatureError::TooManyEmptyAnnuli {
            empty,
            total: thresholds.len(),
        });
    }
    let mut values: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s.value() / c as f64 } else { 0.0 })
        .collect();
    fill_undefined(&thresholds, &mut values, &defined);
    Ok(OrbFunction {
        statistic: Statistic::RAD,
        axis: Axis::RadiusKm,
        thresholds,
        values,
        defined,
        skew_direction: None,
    })
}
