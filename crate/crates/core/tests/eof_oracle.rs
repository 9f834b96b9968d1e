use nalgebra::DMatrix;
use orb_core::eof::{fit_basis, project, reconstruct, ComponentCount, EofBasis};
use orb_core::features::Statistic;
use orb_core::stamp::Basin;
use orb_oracles::linalg::{gram_over_n, jacobi_eigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

fn fit(curves: &[Vec<f64>], count: ComponentCount) -> EofBasis {
    let grid: Vec<f64> = (0..curves[0].len()).map(|j| j as f64).collect();
    fit_basis(Statistic::SIZE, Basin::NAL, &grid, curves, count).unwrap()
}

fn centred(curves: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = curves.len() as f64;
    let d = curves[0].len();
    let mean: Vec<f64> = (0..d).map(|j| curves.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    curves.iter().map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect()).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[test]
fn matches_jacobi_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let x = gaussian(50, 30, &mut rng);
        let basis = fit(&x, ComponentCount::Fixed(30));
        let (values, vectors) = jacobi_eigen(&gram_over_n(&centred(&x)));
        for i in 0..30 {
            assert!((basis.eigenvalues[i] - values[i]).abs() <= 1e-8, "eigenvalue {i}");
            let plus = basis.eofs[i].iter().zip(&vectors[i]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let minus = basis.eofs[i].iter().zip(&vectors[i]).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
            assert!(plus.min(minus) <= 1e-8, "eigenvector {i}: {plus} {minus}");
        }
    }
}

#[test]
fn truncation_beats_random_subspaces() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = gaussian(50, 30, &mut rng);
    let z = centred(&x);
    for k in [1, 3, 8, 15] {
        let basis = fit(&x, ComponentCount::Fixed(k));
        let eof_residual: f64 = x
            .iter()
            .map(|row| sq_dist(row, &reconstruct(&project(row, &basis).unwrap(), &basis).unwrap()))
            .sum();
        for _ in 0..20 {
            let g = DMatrix::from_fn(30, k, |_, _| StandardNormal.sample(&mut rng));
            let q = g.qr().q();
            let residual: f64 = z
                .iter()
                .map(|row| {
                    let r = nalgebra::DVector::from_column_slice(row);
                    let proj = &q * (q.transpose() * &r);
                    (r - proj).norm_squared()
                })
                .sum();
            assert!(eof_residual < residual, "K={k}");
        }
    }
}

#[test]
fn full_rank_round_trip_and_json() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = gaussian(50, 30, &mut rng);
    let basis = fit(&x, ComponentCount::Fixed(30));
    for row in &x {
        let back = reconstruct(&project(row, &basis).unwrap(), &basis).unwrap();
        assert!(row.iter().zip(&back).all(|(a, b)| (a - b).abs() <= 1e-8));
    }
    let json = basis.to_json().unwrap();
    assert_eq!(EofBasis::from_json(&json).unwrap(), basis);
}

#[test]
fn variance_target_picks_smallest_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = gaussian(40, 12, &mut rng);
    let all = fit(&x, ComponentCount::Fixed(12));
    let cum: Vec<f64> = all.explained_variance.iter().scan(0.0, |s, v| { *s += v; Some(*s) }).collect();
    let k = fit(&x, ComponentCount::VarianceTarget(0.9)).k();
    assert!(cum[k - 1] >= 0.9 - 1e-12);
    assert!(k == 1 || cum[k - 2] < 0.9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eofs_are_orthonormal_and_sorted(seed in any::<u64>(), n in 5usize..30, d in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(n, d, &mut rng);
        let basis = fit(&x, ComponentCount::VarianceTarget(1.0));
        for (i, a) in basis.eofs.iter().enumerate() {
            for (j, b) in basis.eofs.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
                prop_assert!((dot - (i == j) as u8 as f64).abs() < 1e-10);
            }
        }
        prop_assert!(basis.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let total: f64 = basis.explained_variance.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn projection_is_idempotent(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(20, 8, &mut rng);
        let basis = fit(&x, ComponentCount::Fixed(k));
        for row in &x {
            let a = project(row, &basis).unwrap();
            let again = project(&reconstruct(&a, &basis).unwrap(), &basis).unwrap();
            prop_assert!(a.iter().zip(&again).all(|(u, v)| (u - v).abs() < 1e-10));
        }
    }

    #[test]
    fn parseval_on_the_full_basis(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(15, 6, &mut rng);
        let basis = fit(&x, ComponentCount::Fixed(6));
        for (row, z) in x.iter().zip(centred(&x)) {
            let a = project(row, &basis).unwrap();
            let lhs: f64 = a.iter().map(|v| v * v).sum();
            let rhs: f64 = z.iter().map(|v| v * v).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
        }
    }
}
