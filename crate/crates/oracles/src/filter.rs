//! A hand-built landfalling track whose filter decisions are worked out by
//! hand, point by point.

use chrono::{DateTime, Duration, TimeZone, Utc};
use orb_core::stamp::{Basin, StampMeta, TrackPoint};

/// Identity and missing fraction only; enough for the sample filter.
#[derive(Debug, Clone)]
pub struct MetaOnly {
    pub storm_id: String,
    pub time: DateTime<Utc>,
    pub missing: f64,
}

impl StampMeta for MetaOnly {
    fn storm_id(&self) -> &str {
        &self.storm_id
    }
    fn time(&self) -> DateTime<Utc> {
        self.time
    }
    fn missing_fraction(&self) -> f64 {
        self.missing
    }
}

const KT: [f64; 20] = [
    40.0, 45.0, 50.0, 55.0, 60.0, 65.0, 70.0, 75.0, 80.0, 85.0, 90.0, 95.0, 100.0, 90.0, 80.0, 70.0, 60.0, 50.0, 45.0,
    40.0,
];
const LAND: [f64; 20] = [
    900.0, 900.0, 900.0, 900.0, 900.0, 900.0, 900.0, 900.0, 900.0, 900.0, 900.0, 900.0, 400.0, 300.0, 270.0, 250.0,
    249.0, 120.0, 0.0, 0.0,
];

/// Twenty 6-hourly points approaching land, the stamps that exist for them,
/// and the indices the 50 kt / 250 km / 5 % / 24 h filter must keep.
///
/// | i | decision |
/// |---|----------|
/// | 0–3 | dropped: less than 24 h of prior track (0, 1 also below 50 kt) |
/// | 4, 5 | kept |
/// | 6 | dropped: 8 % missing |
/// | 7 | kept |
/// | 8 | dropped: no stamp |
/// | 9 | dropped: exactly 5 % missing is not below the limit |
/// | 10, 11 | kept: the next 24 h stay at or beyond 250 km |
/// | 12–17 | dropped: the window reaches the 249 km point or land |
/// | 18, 19 | dropped: below 50 kt and over land |
pub fn designed_track() -> (Vec<TrackPoint>, Vec<MetaOnly>, Vec<usize>) {
    let t0 = Utc.with_ymd_and_hms(2004, 9, 10, 0, 0, 0).unwrap();
    let id = "AL092004";
    let track = (0..20)
        .map(|i| TrackPoint {
            storm_id: id.into(),
            time: t0 + Duration::hours(6 * i as i64),
            lat: 20.0 + 0.4 * i as f64,
            lon: -60.0 - 0.8 * i as f64,
            intensity: KT[i],
            dist_to_land: LAND[i],
            basin: Basin::NAL,
        })
        .collect::<Vec<_>>();
    let stamps = track
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != 8)
        .map(|(i, p)| MetaOnly {
            storm_id: id.into(),
            time: p.time,
            missing: match i {
                6 => 0.08,
                9 => 0.05,
                _ => 0.01,
            },
        })
        .collect();
    (track, stamps, vec![4, 5, 7, 10, 11])
}
