use crate::numeric::{variance_from_sums, ExactSum};
use crate::stamp::Stamp;

use super::{Axis, FeatureConfig, FeatureError, OrbFunction, Statistic, StormCenter};

/// Per-pixel deviation angle ψ (degrees, in `(-90, 90]`) and distance from the
/// storm centre. `None` marks pixels where ψ is undefined.
#[derive(Debug, Clone)]
pub struct DeviationField {
    pub side: usize,
    pub psi_deg: Vec<Option<f64>>,
    pub distance_km: Vec<f64>,
}

impl DeviationField {
    pub fn n_defined(&self) -> usize {
        self.psi_deg.iter().filter(|p| p.is_some()).count()
    }
}

/// Angle between the gradient line and the radial line, folded so that
/// gradients pointing toward and away from the centre both give 0.
#[inline]
pub(crate) fn fold_angle(x: f64, y: f64, gx: f64, gy: f64) -> f64 {
    let cross = x * gy - y * gx;
    let dot = x * gx + y * gy;
    let theta = cross.atan2(dot).to_degrees();
    if theta > 90.0 {
        theta - 180.0
    } else if theta <= -90.0 {
        theta + 180.0
    } else {
        theta
    }
}

/// Finite-difference gradient (°C/km, x east, y north). Central differences in
/// the interior, one-sided at the grid edge; `None` if any stencil pixel is masked.
#[inline]
fn gradient(stamp: &Stamp, row: usize, col: usize, dx: f64, dy: f64) -> Option<(f64, f64)> {
    let side = stamp.side();
    if side < 2 {
        return None;
    }
    let here = stamp.value(row, col)? as f64;
    let gx = if col == 0 {
        (stamp.value(row, 1)? as f64 - here) / dx
    } else if col == side - 1 {
        (here - stamp.value(row, col - 1)? as f64) / dx
    } else {
        (stamp.value(row, col + 1)? as f64 - stamp.value(row, col - 1)? as f64) / (2.0 * dx)
    };
    // rows run north to south
    let gy = if row == 0 {
        (here - stamp.value(1, col)? as f64) / dy
    } else if row == side - 1 {
        (stamp.value(row - 1, col)? as f64 - here) / dy
    } else {
        (stamp.value(row - 1, col)? as f64 - stamp.value(row + 1, col)? as f64) / (2.0 * dy)
    };
    Some((gx, gy))
}

pub fn deviation_angles(
    stamp: &Stamp,
    center: &StormCenter,
    gradient_floor: f64,
) -> Result<DeviationField, FeatureError> {
    center.check(stamp)?;
    let frame = stamp.frame()?;
    let side = stamp.side();
    let mut psi_deg = Vec::with_capacity(side * side);
    let mut distance_km = Vec::with_capacity(side * side);
    for row in 0..side {
        for col in 0..side {
            let (x, y) = frame.offset_km(row, col, center.row, center.col);
            let d = x.hypot(y);
            distance_km.push(d);
            let psi = gradient(stamp, row, col, frame.dx_km, frame.dy_km).and_then(|(gx, gy)| {
                if gx.hypot(gy) < gradient_floor || d == 0.0 {
                    None
                } else {
                    Some(fold_angle(x, y, gx, gy))
                }
            });
            psi_deg.push(psi);
        }
    }
    Ok(DeviationField {
        side,
        psi_deg,
        distance_km,
    })
}

/// Deviation-angle variance: population variance (deg²) of the defined ψ over
/// the disc `|s| <= r`, for each radius on the DAV grid.
pub fn dav(stamp: &Stamp, center: &StormCenter, cfg: &FeatureConfig) -> Result<OrbFunction, FeatureError> {
    center.check(stamp)?;
    let frame = stamp.frame()?;
    let thresholds = cfg.dav_grid(stamp.grid_step());
    let r_max = *thresholds.last().expect("non-empty grid");
    let side = stamp.side();
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for row in 0..side {
        for col in 0..side {
            let (x, y) = frame.offset_km(row, col, center.row, center.col);
            let d = x.hypot(y);
            if d > r_max || d == 0.0 {
                continue;
            }
            if let Some((gx, gy)) = gradient(stamp, row, col, frame.dx_km, frame.dy_km) {
                if gx.hypot(gy) >= cfg.gradient_floor {
                    pts.push((d, fold_angle(x, y, gx, gy)));
                }
            }
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut s1 = Vec::with_capacity(pts.len() + 1);
    let mut s2 = Vec::with_capacity(pts.len() + 1);
    let (mut a, mut b) = (ExactSum::ZERO, ExactSum::ZERO);
    s1.push(a);
    s2.push(b);
    for &(_, psi) in &pts {
        a.add(psi);
        b.add(psi * psi);
        s1.push(a);
        s2.push(b);
    }

    let mut values = Vec::with_capacity(thresholds.len());
    for (k, &r) in thresholds.iter().enumerate() {
        let n = pts.partition_point(|p| p.0 <= r);
        if k == 0 && n < cfg.dav_min_count.max(1) {
            return Err(FeatureError::InsufficientPixels {
                radius_km: r,
                found: n,
                needed: cfg.dav_min_count.max(1),
            });
        }
        values.push(variance_from_sums(n, s1[n], s2[n]));
    }
    let defined = vec![true; values.len()];
    Ok(OrbFunction {
        statistic: Statistic::DAV,
        axis: Axis::RadiusKm,
        thresholds,
        values,
        defined,
        skew_direction: None,
    })
}
