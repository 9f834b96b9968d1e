//! Per-threshold pixel loops for every ORB statistic.
//!
//! Floating-point expressions are written in the same order as the
//! definitions so results can be compared for exact equality; sums go
//! through the order-independent fixed-point accumulator.

use orb_core::numeric::ExactSum;
use orb_core::stamp::Stamp;

const KM_PER_DEGREE: f64 = 111.32;

pub struct Geometry {
    pub dx: f64,
    pub dy: f64,
    pub side: usize,
}

pub fn geometry(stamp: &Stamp) -> Geometry {
    let dy = KM_PER_DEGREE * stamp.grid_step();
    let dx = dy * stamp.center_lat().to_radians().cos();
    Geometry {
        dx,
        dy,
        side: stamp.side(),
    }
}

fn offset(g: &Geometry, row: usize, col: usize, cr: f64, cc: f64) -> (f64, f64) {
    ((col as f64 - cc) * g.dx, (cr - row as f64) * g.dy)
}

fn pixel(stamp: &Stamp, row: usize, col: usize) -> Option<f64> {
    let i = row * stamp.side() + col;
    (!stamp.mask()[i]).then(|| stamp.tb()[i] as f64)
}

fn in_level(stamp: &Stamp, row: isize, col: isize, c: f64) -> bool {
    let side = stamp.side() as isize;
    if row < 0 || col < 0 || row >= side || col >= side {
        return false;
    }
    pixel(stamp, row as usize, col as usize).is_some_and(|v| v <= c)
}

/// Level-set area in km².
pub fn size(stamp: &Stamp, c: f64) -> f64 {
    let g = geometry(stamp);
    let mut n = 0usize;
    for row in 0..g.side {
        for col in 0..g.side {
            if in_level(stamp, row as isize, col as isize, c) {
                n += 1;
            }
        }
    }
    n as f64 * (g.dx * g.dy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub n: usize,
    /// `(magnitude, compass direction in radians)`.
    pub skew: Option<(f64, f64)>,
    pub shape: Option<f64>,
    pub ecc: Option<f64>,
}

/// SKEW, SHAPE and ECC of `L(c)`; statistics are `None` below `n_min` pixels.
pub fn level_stats(stamp: &Stamp, cr: f64, cc: f64, c: f64, n_min: usize) -> LevelStats {
    let g = geometry(stamp);
    let (mut n, mut sc, mut sr, mut scc, mut srr, mut scr) = (0i128, 0i128, 0i128, 0i128, 0i128, 0i128);
    let mut sd = ExactSum::ZERO;
    let mut nb = 0usize;
    let mut sdb = ExactSum::ZERO;
    for row in 0..g.side {
        for col in 0..g.side {
            let (ri, ci) = (row as isize, col as isize);
            if !in_level(stamp, ri, ci, c) {
                continue;
            }
            let (x, y) = offset(&g, row, col, cr, cc);
            let d = x.hypot(y);
            n += 1;
            sc += col as i128;
            sr += row as i128;
            scc += (col * col) as i128;
            srr += (row * row) as i128;
            scr += (col * row) as i128;
            sd.add(d);
            let boundary = [(ri - 1, ci), (ri + 1, ci), (ri, ci - 1), (ri, ci + 1)]
                .iter()
                .any(|&(a, b)| !in_level(stamp, a, b, c));
            if boundary {
                nb += 1;
                sdb.add(d);
            }
        }
    }
    let count = n as usize;
    if count < n_min.max(1) {
        return LevelStats {
            n: count,
            skew: None,
            shape: None,
            ecc: None,
        };
    }
    let nf = n as f64;
    let mean_d = sd.value() / nf;
    let (skew, shape) = if mean_d > 0.0 {
        let x = (sc as f64 / nf - cc) * g.dx;
        let y = (cr - sr as f64 / nf) * g.dy;
        let mut dir = x.atan2(y);
        if dir < 0.0 {
            dir += std::f64::consts::TAU;
        }
        let shape = (nb > 0).then(|| (sdb.value() / nb as f64) / mean_d);
        (Some(((x.hypot(y) / mean_d).min(1.0), dir)), shape)
    } else {
        (None, None)
    };

    let nn = (n * n) as f64;
    let var_c = (n * scc - sc * sc) as f64 / nn;
    let var_r = (n * srr - sr * sr) as f64 / nn;
    let cov = (n * scr - sc * sr) as f64 / nn;
    let sxx = var_c * g.dx * g.dx;
    let syy = var_r * g.dy * g.dy;
    let sxy = -cov * g.dx * g.dy;
    let half_tr = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy).sqrt();
    let (l1, l2) = (half_tr + disc, half_tr - disc);
    let ecc = (l1 > 0.0).then(|| (1.0 - l2 / l1).clamp(0.0, 1.0));
    LevelStats {
        n: count,
        skew,
        shape,
        ecc,
    }
}

/// Deviation angle (degrees, folded into `(-90, 90]`) at one pixel.
pub fn deviation_angle(stamp: &Stamp, row: usize, col: usize, cr: f64, cc: f64, floor: f64) -> Option<f64> {
    let g = geometry(stamp);
    let last = g.side - 1;
    let v = |r: usize, c: usize| pixel(stamp, r, c);
    let here = v(row, col)?;
    let gx = match col {
        0 => (v(row, 1)? - here) / g.dx,
        c if c == last => (here - v(row, c - 1)?) / g.dx,
        c => (v(row, c + 1)? - v(row, c - 1)?) / (2.0 * g.dx),
    };
    let gy = match row {
        0 => (here - v(1, col)?) / g.dy,
        r if r == last => (v(r - 1, col)? - here) / g.dy,
        r => (v(r - 1, col)? - v(r + 1, col)?) / (2.0 * g.dy),
    };
    let (x, y) = offset(&g, row, col, cr, cc);
    if gx.hypot(gy) < floor || x.hypot(y) == 0.0 {
        return None;
    }
    let theta = (x * gy - y * gx).atan2(x * gx + y * gy).to_degrees();
    Some(if theta > 90.0 {
        theta - 180.0
    } else if theta <= -90.0 {
        theta + 180.0
    } else {
        theta
    })
}

/// Population variance of the deviation angles within `r` km; `None` when
/// no angle is defined there.
pub fn dav(stamp: &Stamp, cr: f64, cc: f64, r: f64, floor: f64) -> Option<f64> {
    let g = geometry(stamp);
    let (mut s1, mut s2, mut n) = (ExactSum::ZERO, ExactSum::ZERO, 0usize);
    for row in 0..g.side {
        for col in 0..g.side {
            let (x, y) = offset(&g, row, col, cr, cc);
            if x.hypot(y) > r {
                continue;
            }
            if let Some(p) = deviation_angle(stamp, row, col, cr, cc, floor) {
                s1.add(p);
                s2.add(p * p);
                n += 1;
            }
        }
    }
    (n > 0).then(|| {
        let mean = s1.value() / n as f64;
        (s2.value() / n as f64 - mean * mean).max(0.0)
    })
}

/// Mean temperature over the annulus `[lo, lo + width)`; `None` if empty.
pub fn annulus_mean(stamp: &Stamp, cr: f64, cc: f64, lo: f64, width: f64) -> Option<f64> {
    let g = geometry(stamp);
    let (mut s, mut n) = (ExactSum::ZERO, 0usize);
    for row in 0..g.side {
        for col in 0..g.side {
            let (x, y) = offset(&g, row, col, cr, cc);
            let d = x.hypot(y);
            if d >= lo && d < lo + width {
                if let Some(v) = pixel(stamp, row, col) {
                    s.add(v);
                    n += 1;
                }
            }
        }
    }
    (n > 0).then(|| s.value() / n as f64)
}

/// Count of defined deviation angles within `r` km.
pub fn defined_angles_within(stamp: &Stamp, cr: f64, cc: f64, r: f64, floor: f64) -> usize {
    let g = geometry(stamp);
    let mut n = 0;
    for row in 0..g.side {
        for col in 0..g.side {
            let (x, y) = offset(&g, row, col, cr, cc);
            if x.hypot(y) <= r && deviation_angle(stamp, row, col, cr, cc, floor).is_some() {
                n += 1;
            }
        }
    }
    n
}
