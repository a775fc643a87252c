//! Mode-seeking properties of the selection stage.

use proptest::prelude::*;
use twoac::selection::*;

fn pool_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..2000.0, 1..120)
}

fn select(pool: &CandidatePool, cfg: &SelectionConfig) -> f64 {
    let start = median_shift(pool, cfg).unwrap();
    kde_gradient_ascent(start, pool, cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn median_shift_returns_a_pool_member(values in pool_strategy(), h in 1.0f64..50.0) {
        let pool = CandidatePool::from_values(&values);
        let cfg = SelectionConfig::new(h).unwrap();
        let m = median_shift(&pool, &cfg).unwrap();
        prop_assert!(values.contains(&m));
    }

    #[test]
    fn ascent_never_lowers_density(values in pool_strategy(), x0 in -100.0f64..2100.0, h in 1.0f64..50.0) {
        let pool = CandidatePool::from_values(&values);
        let cfg = SelectionConfig::new(h).unwrap();
        let x = kde_gradient_ascent(x0, &pool, &cfg).unwrap();
        prop_assert!(kde(&pool, x, &cfg).unwrap() >= kde(&pool, x0, &cfg).unwrap() - 1e-12);
    }

    #[test]
    fn selection_ignores_pool_order(values in pool_strategy(), shuffle_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = values.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle_seed));
        let cfg = SelectionConfig::default();
        let (a, b) = (CandidatePool::from_values(&values), CandidatePool::from_values(&shuffled));
        prop_assert_eq!(median_shift(&a, &cfg).unwrap(), median_shift(&b, &cfg).unwrap());
        prop_assert_eq!(select(&a, &cfg), select(&b, &cfg));
        prop_assert_eq!(kernel_voting(&a, &cfg).unwrap(), kernel_voting(&b, &cfg).unwrap());
    }

    #[test]
    fn outlier_contaminated_pool_selects_truth(
        truth in 500.0f64..5000.0,
        inliers in prop::collection::vec(-0.01f64..0.01, 50..150),
        outlier_draws in prop::collection::vec(0.0f64..1.0, 0..16),
    ) {
        let mut values: Vec<f64> = inliers.iter().map(|e| truth * (1.0 + e)).collect();
        // At most 10% of the pool.
        let n_out = outlier_draws.len().min(values.len() / 9);
        values.extend(outlier_draws[..n_out].iter().map(|u| 100.0 + u * 20_000.0));
        let pool = CandidatePool::from_values(&values);
        let f = select(&pool, &SelectionConfig::default());
        prop_assert!((f - truth).abs() <= 0.01 * truth, "selected {} for {}", f, truth);
    }
}

#[test]
fn density_curve_spans_pool_range() {
    let pool = CandidatePool::from_values(&[10.0, 20.0, 35.0]);
    let curve = density_curve(&pool, &SelectionConfig::default(), 512).unwrap();
    assert_eq!(curve.len(), 512);
    assert_eq!(curve[0].0, 10.0);
    assert_eq!(curve[511].0, 35.0);
    assert!(curve.iter().all(|(_, d)| *d > 0.0));
}

#[test]
fn empty_pool_is_an_error() {
    let pool = CandidatePool::new();
    let cfg = SelectionConfig::default();
    assert!(matches!(median_shift(&pool, &cfg), Err(SelectionError::EmptyPool)));
    assert!(matches!(kernel_voting(&pool, &cfg), Err(SelectionError::EmptyPool)));
    assert!(matches!(SelectionConfig::new(0.0), Err(SelectionError::InvalidBandwidth(_))));
}
