use crate::numeric::ExactSum;
use crate::stamp::{GridFrame, Stamp};

use super::{CenterSource, EyeConfig, FeatureError, StormCenter};

/// Pixel offsets whose distance from the origin lies in `(r_lo, r_hi]`
/// (`r_lo < 0` includes the origin).
fn disc_offsets(frame: &GridFrame, r_lo: f64, r_hi: f64) -> Vec<(isize, isize)> {
    let ri = (r_hi / frame.dy_km).ceil() as isize;
    let rj = (r_hi / frame.dx_km).ceil() as isize;
    let mut out = Vec::new();
    for di in -ri..=ri {
        for dj in -rj..=rj {
            let d = (dj as f64 * frame.dx_km).hypot(di as f64 * frame.dy_km);
            if d > r_lo && d <= r_hi {
                out.push((di, dj));
            }
        }
    }
    out
}

fn offsets_mean(stamp: &Stamp, row: usize, col: usize, offsets: &[(isize, isize)]) -> Option<f64> {
    let side = stamp.side() as isize;
    let mut sum = ExactSum::ZERO;
    let mut n = 0usize;
    for &(di, dj) in offsets {
        let (r, c) = (row as isize + di, col as isize + dj);
        if r < 0 || c < 0 || r >= side || c >= side {
            continue;
        }
        if let Some(v) = stamp.value(r as usize, c as usize) {
            sum.add(v as f64);
            n += 1;
        }
    }
    (n > 0).then(|| sum.value() / n as f64)
}

/// Mean non-masked temperature within `r_eye_km` of pixel `(row, col)`.
pub fn inner_core_mean(stamp: &Stamp, row: usize, col: usize, r_eye_km: f64) -> Result<Option<f64>, FeatureError> {
    let frame = stamp.frame()?;
    Ok(offsets_mean(stamp, row, col, &disc_offsets(&frame, -1.0, r_eye_km)))
}

/// Automated centring.
///
/// Candidates are the pixels within `search_deg` of the grid centre. The
/// candidate with the warmest inner core (mean over `r <= r_eye`) is taken as
/// an eye when that mean exceeds `t_eye` and beats either the best-track
/// inner core or its own surrounding ring `(r_eye, 2 r_eye]` by at least
/// `delta_eye`. Exact ties between candidates resolve to their mean position.
pub fn find_center(stamp: &Stamp, eye: &EyeConfig) -> Result<StormCenter, FeatureError> {
    let frame = stamp.frame()?;
    let n = stamp.half_width();
    let side = stamp.side();
    let best_track = StormCenter::best_track(stamp);

    let inner = disc_offsets(&frame, -1.0, eye.r_eye_km);
    let ring = disc_offsets(&frame, eye.r_eye_km, 2.0 * eye.r_eye_km);
    if inner.is_empty() {
        return Ok(best_track);
    }
    let reach = (eye.search_deg / stamp.grid_step()).round() as usize;
    let lo = n.saturating_sub(reach);
    let hi = (n + reach).min(side - 1);

    let mut best: Option<f64> = None;
    let mut tied: Vec<(usize, usize)> = Vec::new();
    for row in lo..=hi {
        for col in lo..=hi {
            let Some(m) = offsets_mean(stamp, row, col, &inner) else {
                continue;
            };
            match best {
                Some(b) if m < b => {}
                Some(b) if m == b => tied.push((row, col)),
                _ => {
                    best = Some(m);
                    tied.clear();
                    tied.push((row, col));
                }
            }
        }
    }
    let Some(best_mean) = best else {
        return Ok(best_track);
    };
    if best_mean <= eye.t_eye_c {
        return Ok(best_track);
    }
    let row = tied.iter().map(|p| p.0 as f64).sum::<f64>() / tied.len() as f64;
    let col = tied.iter().map(|p| p.1 as f64).sum::<f64>() / tied.len() as f64;

    let bt_mean = offsets_mean(stamp, n, n, &inner);
    let beats_best_track = bt_mean.is_some_and(|b| best_mean - b >= eye.delta_eye_c);
    let (rr, rc) = (row.round() as usize, col.round() as usize);
    let beats_ring = offsets_mean(stamp, rr, rc, &ring).is_some_and(|r| best_mean - r >= eye.delta_eye_c);
    if beats_best_track || beats_ring {
        Ok(StormCenter {
            row,
            col,
            source: CenterSource::EyeDetected,
        })
    } else {
        Ok(best_track)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    const DX: f64 = 111.32 * 0.04;

    /// −70 °C field with a 0 °C disc of radius `r` km centred at pixel offset (di, dj).
    fn warm_disc(n: usize, r: f64, di: isize, dj: isize) -> Stamp {
        let side = 2 * n + 1;
        let mut tb = Vec::new();
        for row in 0..side {
            for col in 0..side {
                let y = (row as f64 - (n as isize + di) as f64) * DX;
                let x = (col as f64 - (n as isize + dj) as f64) * DX;
                tb.push(if x.hypot(y) <= r { 0.0 } else { -70.0 });
            }
        }
        Stamp::new(
            "T",
            Utc.with_ymd_and_hms(2010, 1, 1, 0, 0, 0).unwrap(),
            0.0,
            0.0,
            0.04,
            n,
            tb,
            vec![false; side * side],
        )
        .unwrap()
    }

    #[test]
    fn offset_eye_is_found() {
        // 7 pixels east = 31.2 km
        let s = warm_disc(30, 20.0, 0, 7);
        let c = find_center(&s, &EyeConfig::default()).unwrap();
        assert_eq!(c.source, CenterSource::EyeDetected);
        assert_eq!((c.row, c.col), (30.0, 37.0));
    }

    #[test]
    fn uniform_field_keeps_best_track() {
        let side = 41;
        let s = Stamp::new(
            "T",
            Utc.with_ymd_and_hms(2010, 1, 1, 0, 0, 0).unwrap(),
            0.0,
            0.0,
            0.04,
            20,
            vec![-60.0; side * side],
            vec![false; side * side],
        )
        .unwrap();
        let c = find_center(&s, &EyeConfig::default()).unwrap();
        assert_eq!(c.source, CenterSource::BestTrack);
        assert_eq!((c.row, c.col), (20.0, 20.0));
    }

    #[test]
    fn centred_eye_is_detected_at_grid_centre() {
        let s = warm_disc(30, 20.0, 0, 0);
        let c = find_center(&s, &EyeConfig::default()).unwrap();
        assert_eq!(c.source, CenterSource::EyeDetected);
        assert_eq!((c.row, c.col), (30.0, 30.0));
    }
}
