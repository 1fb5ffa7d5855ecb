//! Metric oracle tests: hand-computed worked examples, exact in double
//! precision, plus the distributional properties every metric must satisfy.

use proptest::prelude::*;

use fedseries_core::metrics::{mae, mape, mse};

#[test]
fn hand_computed_examples_are_exact() {
    let actual = [1.0, 2.0];
    let forecast = [2.0, 2.0];
    assert_eq!(mse(&actual, &forecast).unwrap(), 0.5);
    assert_eq!(mae(&actual, &forecast).unwrap(), 0.5);
    assert_eq!(mape(&actual, &forecast).unwrap(), 50.0);
}

#[test]
fn mape_excludes_near_zero_actuals() {
    assert_eq!(mape(&[0.0, 1.0], &[5.0, 1.0]).unwrap(), 0.0);
    assert_eq!(mape(&[1e-9, 2.0], &[7.0, 1.0]).unwrap(), 50.0);
}

#[test]
fn mape_is_a_percentage_at_table_magnitudes() {
    // Residuals a few percent of the level must read as single-digit
    // percents, not fractions.
    let actual = [0.50, 0.52, 0.48, 0.51];
    let forecast = [0.515, 0.505, 0.49, 0.50];
    let value = mape(&actual, &forecast).unwrap();
    assert!(value > 1.0 && value < 5.0, "expected percent scale, got {value}");
}

proptest! {
    #[test]
    fn metrics_are_nonnegative_and_zero_iff_equal(
        pairs in proptest::collection::vec((-10.0_f64..10.0, -10.0_f64..10.0), 1..40)
    ) {
        let actual: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let forecast: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let m = mse(&actual, &forecast).unwrap();
        let a = mae(&actual, &forecast).unwrap();
        prop_assert!(m >= 0.0 && a >= 0.0);
        let equal = actual.iter().zip(&forecast).all(|(x, y)| x == y);
        prop_assert_eq!(m == 0.0, equal);
        prop_assert_eq!(a == 0.0, equal);
    }

    #[test]
    fn mse_mae_invariant_under_joint_permutation(
        pairs in proptest::collection::vec((-5.0_f64..5.0, -5.0_f64..5.0), 2..30),
        seed in 0_u64..1000
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha20Rng::seed_from_u64(seed));

        let (a1, f1): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (a2, f2): (Vec<f64>, Vec<f64>) = shuffled.into_iter().unzip();
        prop_assert!((mse(&a1, &f1).unwrap() - mse(&a2, &f2).unwrap()).abs() < 1e-12);
        prop_assert!((mae(&a1, &f1).unwrap() - mae(&a2, &f2).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn mae_bounded_by_root_mse(
        pairs in proptest::collection::vec((-10.0_f64..10.0, -10.0_f64..10.0), 1..40)
    ) {
        let actual: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let forecast: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let root_mse = mse(&actual, &forecast).unwrap().sqrt();
        prop_assert!(mae(&actual, &forecast).unwrap() <= root_mse + 1e-12);
    }
}
