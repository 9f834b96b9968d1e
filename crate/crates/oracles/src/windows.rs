//! Rapid-change labels by enumerating every pair of track points.

use chrono::{DateTime, Duration, Utc};

/// Marks every point inside some `[t, t + 24 h]` span that holds exactly the
/// five 6-hourly points of a complete window and whose end-to-end change
/// reaches `threshold` (or `-threshold` for weakening).
pub fn enumerate_labels(times: &[DateTime<Utc>], v: &[f64], threshold: f64) -> (Vec<bool>, Vec<bool>) {
    let n = times.len();
    let mut ri = vec![false; n];
    let mut rw = vec![false; n];
    for a in 0..n {
        for b in 0..n {
            if times[b] - times[a] != Duration::hours(24) {
                continue;
            }
            let inside: Vec<usize> = (0..n).filter(|&k| times[k] >= times[a] && times[k] <= times[b]).collect();
            let complete = inside.len() == 5
                && inside
                    .iter()
                    .all(|&k| (times[k] - times[a]).num_minutes() % 360 == 0);
            if !complete {
                continue;
            }
            let change = v[b] - v[a];
            for &k in &inside {
                if change >= threshold {
                    ri[k] = true;
                }
                if change <= -threshold {
                    rw[k] = true;
                }
            }
        }
    }
    (ri, rw)
}

/// A random intensity track: mostly 6-hourly with occasional gaps and
/// off-synoptic points, intensities in 5-kt steps with bursts.
pub fn random_track(seed: u64) -> (Vec<DateTime<Utc>>, Vec<f64>) {
    use chrono::TimeZone;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..45);
    let mut t = Utc.with_ymd_and_hms(2003, 9, 1, 0, 0, 0).unwrap();
    let mut v: f64 = rng.random_range(20..60) as f64;
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for _ in 0..n {
        times.push(t);
        values.push(v);
        let step = match rng.random_range(0..20) {
            0 => 3,
            1 => 12,
            2 => 18,
            _ => 6,
        };
        t += Duration::hours(step);
        let burst = if rng.random_bool(0.15) { 15.0 } else { 5.0 };
        v = (v + burst * rng.random_range(-2..=2) as f64).max(15.0);
    }
    (times, values)
}
