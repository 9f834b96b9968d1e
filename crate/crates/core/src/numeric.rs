//! Small numeric helpers shared by the feature kernels and the statistics code.

use std::ops::{AddAssign, Sub, SubAssign};

const FIXED_SCALE: f64 = 18_446_744_073_709_551_616.0; // 2^64

/// Order-independent accumulator.
///
/// Each term is rounded once onto a 2^-64 fixed-point grid and summed as an
/// `i128`, so the total is identical no matter how the terms are visited.
/// Terms must satisfy `|v| < 2^62`; the feature kernels stay far below that.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExactSum(i128);

impl ExactSum {
    pub const ZERO: ExactSum = ExactSum(0);

    #[inline]
    pub fn quantize(v: f64) -> i128 {
        (v * FIXED_SCALE).round() as i128
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        self.0 += Self::quantize(v);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.0 as f64 / FIXED_SCALE
    }

    pub fn from_iter<I: IntoIterator<Item = f64>>(it: I) -> Self {
        let mut s = ExactSum::ZERO;
        for v in it {
            s.add(v);
        }
        s
    }
}

impl AddAssign for ExactSum {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl SubAssign for ExactSum {
    fn sub_assign(&mut self, rhs: Self) {
        self.0 -= rhs.0;
    }
}

impl Sub for ExactSum {
    type Output = ExactSum;
    fn sub(self, rhs: Self) -> Self {
        ExactSum(self.0 - rhs.0)
    }
}

/// Population variance from exact first and second moments.
pub fn variance_from_sums(n: usize, sum: ExactSum, sum_sq: ExactSum) -> f64 {
    let n = n as f64;
    let mean = sum.value() / n;
    (sum_sq.value() / n - mean * mean).max(0.0)
}

/// `n` evenly spaced values from `lo` to `hi`, with both ends pinned exactly.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|k| lo + k as f64 * step).collect();
            v[n - 1] = hi;
            v
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divides by n).
pub fn population_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Linear-interpolation quantile of an already sorted slice (R type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fill entries where `defined` is false by linear interpolation between the
/// nearest defined neighbours; leading/trailing gaps take the nearest defined
/// value. Returns false (and zero-fills) when nothing is defined.
pub fn fill_undefined(x: &[f64], values: &mut [f64], defined: &[bool]) -> bool {
    let idx: Vec<usize> = (0..values.len()).filter(|&i| defined[i]).collect();
    if idx.is_empty() {
        values.iter_mut().for_each(|v| *v = 0.0);
        return false;
    }
    let first = idx[0];
    let last = *idx.last().unwrap();
    for i in 0..first {
        values[i] = values[first];
    }
    for i in last + 1..values.len() {
        values[i] = values[last];
    }
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a + 1..b {
            let t = (x[i] - x[a]) / (x[b] - x[a]);
            values[i] = values[a] + t * (values[b] - values[a]);
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_sum_is_order_independent() {
        let xs = [1e-3, 1234.5678, -0.25, 3.0e-9, 987.654321, 0.1, 0.2, 0.3];
        let a = ExactSum::from_iter(xs.iter().copied());
        let b = ExactSum::from_iter(xs.iter().rev().copied());
        assert_eq!(a, b);
        assert!((a.value() - xs.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn linspace_pins_ends() {
        let v = linspace(50.0, 400.0, 80);
        assert_eq!(v[0], 50.0);
        assert_eq!(v[79], 400.0);
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn fill_interpolates_and_extends() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let mut v = [9.0, 1.0, 9.0, 3.0, 9.0];
        let d = [false, true, false, true, false];
        assert!(fill_undefined(&x, &mut v, &d));
        assert_eq!(v, [1.0, 1.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn quantile_type7() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!((logit(sigmoid(1.3)) - 1.3).abs() < 1e-12);
    }
}
