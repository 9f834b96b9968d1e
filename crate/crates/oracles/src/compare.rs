//! Side-by-side checks of the fast feature extractors against the brute-force
//! loops at randomly chosen thresholds.

use orb_core::features::{bulk_morphology, dav, find_center, radial_profile, FeatureConfig, OrbFunction};
use orb_core::stamp::Stamp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features;

/// Number of individual values compared, split by outcome.
#[derive(Debug, Default, Clone, Copy)]
pub struct Tally {
    pub defined: usize,
    pub undefined: usize,
}

fn pick(rng: &mut ChaCha8Rng, len: usize, count: usize) -> Vec<usize> {
    (0..count).map(|_| rng.random_range(0..len)).collect()
}

fn expect(f: &OrbFunction, k: usize, want: Option<f64>, what: &str, tally: &mut Tally) -> Result<(), String> {
    match want {
        Some(v) if f.defined[k] && f.values[k] == v => {
            tally.defined += 1;
            Ok(())
        }
        None if !f.defined[k] => {
            tally.undefined += 1;
            Ok(())
        }
        _ => Err(format!(
            "{what} at threshold {}: fast {:?} (defined {}) vs brute force {want:?}",
            f.thresholds[k], f.values[k], f.defined[k]
        )),
    }
}

/// Compares every statistic at `per_stat` random thresholds. Also checks
/// that SIZE never decreases with temperature.
pub fn check_stamp(stamp: &Stamp, cfg: &FeatureConfig, per_stat: usize, seed: u64) -> Result<Tally, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::default();
    let center = find_center(stamp, &cfg.eye).map_err(|e| e.to_string())?;
    let (cr, cc) = (center.row, center.col);

    let bulk = bulk_morphology(stamp, &center, cfg).map_err(|e| e.to_string())?;
    if bulk.size.values.windows(2).any(|w| w[1] < w[0]) {
        return Err("SIZE decreases with temperature".into());
    }
    for k in pick(&mut rng, bulk.size.len(), per_stat) {
        let c = bulk.size.thresholds[k];
        expect(&bulk.size, k, Some(features::size(stamp, c)), "SIZE", &mut tally)?;
        let ls = features::level_stats(stamp, cr, cc, c, cfg.n_min);
        expect(&bulk.skew, k, ls.skew.map(|s| s.0), "SKEW", &mut tally)?;
        if let Some((_, dir)) = ls.skew {
            let got = bulk.skew.skew_direction.as_ref().expect("SKEW carries directions")[k];
            if got != dir {
                return Err(format!("SKEW direction at {c}: {got} vs {dir}"));
            }
        }
        expect(&bulk.shape, k, ls.shape, "SHAPE", &mut tally)?;
        expect(&bulk.ecc, k, ls.ecc, "ECC", &mut tally)?;
    }

    let rad = radial_profile(stamp, &center, cfg).map_err(|e| e.to_string())?;
    let step = rad.thresholds[1] - rad.thresholds[0];
    for k in pick(&mut rng, rad.len(), per_stat) {
        let want = features::annulus_mean(stamp, cr, cc, rad.thresholds[k], step);
        expect(&rad, k, want, "RAD", &mut tally)?;
    }

    let grid = cfg.dav_grid(stamp.grid_step());
    match dav(stamp, &center, cfg) {
        Ok(f) => {
            for k in pick(&mut rng, f.len(), per_stat) {
                let want = features::dav(stamp, cr, cc, f.thresholds[k], cfg.gradient_floor);
                expect(&f, k, want, "DAV", &mut tally)?;
            }
        }
        Err(_) => {
            let n = features::defined_angles_within(stamp, cr, cc, grid[0], cfg.gradient_floor);
            if n >= cfg.dav_min_count.max(1) {
                return Err(format!("DAV rejected a stamp with {n} defined angles inside {} km", grid[0]));
            }
            tally.undefined += 1;
        }
    }
    Ok(tally)
}
