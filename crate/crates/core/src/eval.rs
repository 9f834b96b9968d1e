//! ROC/AUC, pivotal bootstrap intervals and permutation tests on AUC
//! differences.
//!
//! Every resampling round draws from its own ChaCha stream keyed by the run
//! seed and the round index, so results do not depend on the thread count.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::quantile_sorted;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("labels contain a single class; both are required")]
    SingleClass,
    #[error("length mismatch: {0} predictions, {1} labels")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} rows, got {found}")]
    TooFew { needed: usize, found: usize },
    #[error("bootstrap gave up after {0} single-class redraws")]
    TooManyRedraws(usize),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

fn class_counts(p: &[f64], y: &[bool]) -> Result<(u64, u64), EvalError> {
    if p.len() != y.len() {
        return Err(EvalError::LengthMismatch(p.len(), y.len()));
    }
    let pos = y.iter().filter(|v| **v).count() as u64;
    let neg = y.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    Ok((pos, neg))
}

/// Walks groups of tied scores from the highest down, calling `f(pos, neg)`
/// with the class counts of each group.
fn for_each_group(p: &[f64], y: &[bool], mut f: impl FnMut(u64, u64)) {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    let mut i = 0;
    while i < idx.len() {
        let v = p[idx[i]];
        let (mut gp, mut gn) = (0, 0);
        while i < idx.len() && p[idx[i]] == v {
            if y[idx[i]] {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        f(gp, gn);
    }
}

/// Area under the ROC curve. Tied scores contribute a diagonal segment, so
/// the result equals the Mann–Whitney probability with ties counted 1/2.
pub fn auc(p: &[f64], y: &[bool]) -> Result<f64, EvalError> {
    let (pos, neg) = class_counts(p, y)?;
    // twice the trapezoid area in units of one (pos, neg) pair
    let (mut tp, mut twice) = (0u64, 0u128);
    for_each_group(p, y, |gp, gn| {
        twice += gn as u128 * (2 * tp + gp) as u128;
        tp += gp;
    });
    Ok(twice as f64 / (2.0 * pos as f64 * neg as f64))
}

/// ROC curve over every distinct score, from (0, 0) to (1, 1).
pub fn roc_auc(p: &[f64], y: &[bool]) -> Result<RocCurve, EvalError> {
    let (pos, neg) = class_counts(p, y)?;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    for_each_group(p, y, |gp, gn| {
        tp += gp;
        fp += gn;
        fpr.push(fp as f64 / neg as f64);
        tpr.push(tp as f64 / pos as f64);
    });
    Ok(RocCurve {
        fpr,
        tpr,
        auc: auc(p, y)?,
    })
}

/// Trapezoid integral of a curve given by its vertices.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

pub fn write_roc_csv<W: Write>(mut w: W, roc: &RocCurve) -> Result<(), EvalError> {
    writeln!(w, "fpr,tpr")?;
    for (f, t) in roc.fpr.iter().zip(&roc.tpr) {
        writeln!(w, "{f},{t}")?;
    }
    Ok(())
}

pub(crate) fn round_rng(seed: u64, round: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round);
    rng
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub auc: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub resamples: usize,
    pub redraws: usize,
    pub seed: u64,
}

/// Pivotal bootstrap interval `(2 A - q_hi, 2 A - q_lo)` for the AUC, from
/// `b` resamples of the rows with replacement. Single-class resamples are
/// redrawn, at most `10 b` times in total.
pub fn bootstrap_auc_ci(p: &[f64], y: &[bool], b: usize, level: f64, seed: u64) -> Result<BootstrapCi, EvalError> {
    let point = auc(p, y)?;
    let n = p.len();
    if n < 2 {
        return Err(EvalError::TooFew { needed: 2, found: n });
    }
    let cap = 10 * b;
    let rounds: Vec<Option<(f64, usize)>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = round_rng(seed, r as u64);
            let (mut ps, mut ys) = (vec![0.0; n], vec![false; n]);
            for redraw in 0..=cap {
                for i in 0..n {
                    let k = rng.random_range(0..n);
                    ps[i] = p[k];
                    ys[i] = y[k];
                }
                if let Ok(a) = auc(&ps, &ys) {
                    return Some((a, redraw));
                }
            }
            None
        })
        .collect();
    let redraws: usize = rounds.iter().map(|r| r.map_or(cap + 1, |x| x.1)).sum();
    if redraws > cap {
        return Err(EvalError::TooManyRedraws(redraws));
    }
    let mut stats: Vec<f64> = rounds.into_iter().map(|r| r.unwrap().0).collect();
    stats.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    let q_lo = quantile_sorted(&stats, alpha / 2.0);
    let q_hi = quantile_sorted(&stats, 1.0 - alpha / 2.0);
    Ok(BootstrapCi {
        auc: point,
        lower: 2.0 * point - q_hi,
        upper: 2.0 * point - q_lo,
        level,
        resamples: b,
        redraws,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Permutation tests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Alternative: the first model has the lower AUC.
    Less,
    /// Alternative: the first model has the higher AUC.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationOptions {
    pub rounds: usize,
    pub seed: u64,
    /// Swap the two models' predictions within rows instead of pooling.
    pub paired: bool,
    /// Report `(1 + count) / (1 + B)`.
    pub add_one: bool,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        PermutationOptions {
            rounds: 1000,
            seed: 0,
            paired: false,
            add_one: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// `AUC(x) - AUC(y)`.
    pub statistic: f64,
    pub p_value: f64,
    pub rounds: usize,
    pub direction: Direction,
    pub seed: u64,
    pub paired: bool,
    pub add_one: bool,
}

/// Permutation test on `T = AUC(x) - AUC(y)`.
///
/// By default the `2N` predictions are pooled and each round draws `N` of
/// them without replacement as the first model, the rest as the second, both
/// aligned with `labels` in order.
pub fn permutation_test(
    x: &[f64],
    y: &[f64],
    labels: &[bool],
    direction: Direction,
    opts: &PermutationOptions,
) -> Result<TestResult, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    let t = auc(x, labels)? - auc(y, labels)?;
    let n = x.len();
    let pool: Vec<f64> = x.iter().chain(y).copied().collect();
    let (count, ties): (usize, usize) = (0..opts.rounds)
        .into_par_iter()
        .map(|r| {
            let mut rng = round_rng(opts.seed, r as u64);
            let (xs, ys): (Vec<f64>, Vec<f64>) = if opts.paired {
                x.iter()
                    .zip(y)
                    .map(|(&a, &b)| if rng.random::<bool>() { (b, a) } else { (a, b) })
                    .unzip()
            } else {
                let mut idx: Vec<usize> = (0..2 * n).collect();
                idx.shuffle(&mut rng);
                (
                    idx[..n].iter().map(|&i| pool[i]).collect(),
                    idx[n..].iter().map(|&i| pool[i]).collect(),
                )
            };
            // class counts are unchanged, so these cannot fail
            let tt = auc(&xs, labels).unwrap() - auc(&ys, labels).unwrap();
            let hit = match direction {
                Direction::Less => tt < t,
                Direction::Greater => tt > t,
            };
            (hit as usize, (tt == t) as usize)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if opts.rounds > 0 && ties == opts.rounds {
        log::warn!("every permuted statistic equals the observed {t}; the p-value reflects ties, not evidence");
    }
    let b = opts.rounds as f64;
    let p_value = if opts.add_one {
        (1.0 + count as f64) / (1.0 + b)
    } else {
        count as f64 / b
    };
    Ok(TestResult {
        statistic: t,
        p_value,
        rounds: opts.rounds,
        direction,
        seed: opts.seed,
        paired: opts.paired,
        add_one: opts.add_one,
    })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub n_positive: usize,
    pub auc: f64,
    pub ci: BootstrapCi,
    pub p_star: f64,
    pub balanced_accuracy: f64,
}

pub fn evaluate(p: &[f64], y: &[bool], p_star: f64, resamples: usize, level: f64, seed: u64) -> Result<EvalReport, EvalError> {
    let ci = bootstrap_auc_ci(p, y, resamples, level, seed)?;
    Ok(EvalReport {
        n: p.len(),
        n_positive: y.iter().filter(|v| **v).count(),
        auc: ci.auc,
        balanced_accuracy: crate::lasso::balanced_accuracy(p, y, p_star),
        p_star,
        ci,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        assert_eq!(auc(&[0.2, 0.8, 0.6, 0.4], &[false, true, true, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(EvalError::SingleClass)));
    }

    #[test]
    fn roc_integral_matches_auc() {
        let p = [0.1, 0.4, 0.4, 0.35, 0.8, 0.8, 0.2];
        let y = [false, true, false, true, true, false, false];
        let roc = roc_auc(&p, &y).unwrap();
        assert_eq!((roc.fpr[0], roc.tpr[0]), (0.0, 0.0));
        assert_eq!((*roc.fpr.last().unwrap(), *roc.tpr.last().unwrap()), (1.0, 1.0));
        assert!((trapezoid(&roc.fpr, &roc.tpr) - roc.auc).abs() < 1e-12);
    }

    #[test]
    fn perfect_classifier_interval_collapses() {
        let p: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        let y: Vec<bool> = (0..500).map(|i| i >= 250).collect();
        let ci = bootstrap_auc_ci(&p, &y, 250, 0.95, 1).unwrap();
        assert!(ci.upper - ci.lower < 0.02);
    }

    #[test]
    fn identical_models_give_middling_p() {
        let p: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
        let y: Vec<bool> = (0..200).map(|i| (i * 13) % 7 < 3).collect();
        let r = permutation_test(&p, &p, &y, Direction::Less, &PermutationOptions { seed: 3, ..Default::default() }).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 0.5).abs() <= 0.05, "{}", r.p_value);
    }

    #[test]
    fn p_values_lie_on_grid() {
        let p: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let q: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).cos()).collect();
        let y: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        for add_one in [false, true] {
            let o = PermutationOptions { rounds: 100, seed: 9, paired: false, add_one };
            let r = permutation_test(&p, &q, &y, Direction::Greater, &o).unwrap();
            let k = if add_one { r.p_value * 101.0 - 1.0 } else { r.p_value * 100.0 };
            assert!((k - k.round()).abs() < 1e-9);
        }
    }
}
