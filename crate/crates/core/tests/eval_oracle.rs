use orb_core::eval::{auc, bootstrap_auc_ci, permutation_test, roc_auc, trapezoid, Direction, PermutationOptions};
use orb_oracles::stats::{ks_uniform, pair_count_auc};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..40);
    let levels = rng.random_range(2..12);
    let mut y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    y[0] = true;
    y[1] = false;
    // coarse scores so ties are common
    let p = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
    (p, y)
}

#[test]
fn auc_equals_pair_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let (p, y) = instance(&mut rng);
        assert_eq!(auc(&p, &y).unwrap(), pair_count_auc(&p, &y));
        let roc = roc_auc(&p, &y).unwrap();
        assert!((trapezoid(&roc.fpr, &roc.tpr) - roc.auc).abs() < 1e-12);
    }
}

/// Scores whose population AUC is `Φ(mu / √2)`.
fn binormal(n_pos: usize, n_neg: usize, mu: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let pos = Normal::new(mu, 1.0).unwrap();
    let neg = Normal::new(0.0, 1.0).unwrap();
    let mut p: Vec<f64> = (0..n_pos).map(|_| pos.sample(rng)).collect();
    p.extend((0..n_neg).map(|_| neg.sample(rng)));
    let y = (0..n_pos + n_neg).map(|i| i < n_pos).collect();
    (p, y)
}

#[test]
fn permutation_p_values_are_uniform_under_exchangeability() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ps = Vec::new();
    for rep in 0..200 {
        let (x, labels) = binormal(30, 50, 0.8, &mut rng);
        let (y, _) = binormal(30, 50, 0.8, &mut rng);
        let opts = PermutationOptions {
            rounds: 1000,
            seed: rep,
            ..PermutationOptions::default()
        };
        let p = permutation_test(&x, &y, &labels, Direction::Greater, &opts).unwrap().p_value;
        ps.push(p);
    }
    let d = ks_uniform(&ps);
    assert!(d < 0.1, "KS distance {d}");
}

#[test]
fn bootstrap_interval_covers_at_nominal_rate() {
    let mu = 2f64.sqrt() * 0.674_489_750_196_081_7;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut covered = 0;
    for rep in 0..200 {
        let (p, y) = binormal(80, 120, mu, &mut rng);
        let ci = bootstrap_auc_ci(&p, &y, 250, 0.95, rep).unwrap();
        if ci.lower <= 0.75 && 0.75 <= ci.upper {
            covered += 1;
        }
    }
    let rate = covered as f64 / 200.0;
    assert!((0.90..=0.99).contains(&rate), "coverage {rate}");
}

#[test]
fn clear_difference_is_significant_and_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (strong, labels) = binormal(60, 60, 2.0, &mut rng);
    let noise: Vec<f64> = (0..120).map(|_| rng.random::<f64>()).collect();
    let opts = PermutationOptions {
        seed: 9,
        ..PermutationOptions::default()
    };
    let a = permutation_test(&strong, &noise, &labels, Direction::Greater, &opts).unwrap();
    let b = permutation_test(&strong, &noise, &labels, Direction::Greater, &opts).unwrap();
    assert_eq!(a, b);
    assert!(a.p_value < 0.01);
    let less = permutation_test(&strong, &noise, &labels, Direction::Less, &opts).unwrap();
    assert!(less.p_value > 0.9);
    let add_one = PermutationOptions { add_one: true, ..opts };
    let c = permutation_test(&strong, &noise, &labels, Direction::Greater, &add_one).unwrap();
    assert!(c.p_value >= 1.0 / 1001.0);
}

proptest! {
    #[test]
    fn flipping_labels_mirrors_auc(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, y) = instance(&mut rng);
        let flipped: Vec<bool> = y.iter().map(|v| !v).collect();
        let (a, b) = (auc(&p, &y).unwrap(), auc(&p, &flipped).unwrap());
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_rescoring_keeps_auc(seed in any::<u64>(), scale in 0.01f64..100.0, shift in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, y) = instance(&mut rng);
        let q: Vec<f64> = p.iter().map(|v| (v * scale + shift).exp()).collect();
        prop_assert_eq!(auc(&p, &y).unwrap(), auc(&q, &y).unwrap());
    }

    #[test]
    fn bootstrap_interval_is_ordered(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, y) = binormal(20, 20, 1.0, &mut rng);
        let ci = bootstrap_auc_ci(&p, &y, 250, 0.95, seed).unwrap();
        prop_assert!(ci.lower <= ci.upper);
        prop_assert_eq!(ci.resamples, 250);
    }
}
