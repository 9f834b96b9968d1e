//! Pair counting and distribution distances.

/// Probability that a random positive outscores a random negative, ties ½.
pub fn pair_count_auc(p: &[f64], y: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &pi) in p.iter().enumerate() {
        if !y[i] {
            continue;
        }
        for (j, &pj) in p.iter().enumerate() {
            if y[j] {
                continue;
            }
            pairs += 1.0;
            if pi > pj {
                wins += 1.0;
            } else if pi == pj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Kolmogorov–Smirnov distance between a sample and U(0, 1).
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let v = v.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - v).max(v - i as f64 / n)
        })
        .fold(0.0, f64::max)
}
