use proptest::prelude::*;
use uplink_core::quantile;

/// Hyndman-Fan type 7 in its textbook 1-based form:
/// `h = (n − 1)·p + 1`, `Q = x_⌊h⌋ + (h − ⌊h⌋)(x_⌊h⌋+1 − x_⌊h⌋)`.
fn type7(values: &[f64], p: f64) -> f64 {
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let h = (n as f64 - 1.0) * p + 1.0;
    let lo = h.floor() as usize;
    if lo >= n {
        return x[n - 1];
    }
    x[lo - 1] + (h - lo as f64) * (x[lo] - x[lo - 1])
}

proptest! {
    #[test]
    fn matches_reference(values in prop::collection::vec(-1e3f64..1e3, 1..200), p in 0.0f64..=1.0) {
        let got = quantile(&values, p).unwrap();
        let want = type7(&values, p);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn monotone_in_level(values in prop::collection::vec(0.0f64..100.0, 1..100), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantile(&values, lo).unwrap() <= quantile(&values, hi).unwrap());
    }

    #[test]
    fn bounded_by_extremes(values in prop::collection::vec(-50.0f64..50.0, 1..100), p in 0.0f64..=1.0) {
        let q = quantile(&values, p).unwrap();
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(q >= min && q <= max);
        prop_assert_eq!(quantile(&values, 0.0).unwrap(), min);
        prop_assert_eq!(quantile(&values, 1.0).unwrap(), max);
    }

    #[test]
    fn order_does_not_matter(mut values in prop::collection::vec(0.0f64..10.0, 1..60), p in 0.0f64..=1.0) {
        let q = quantile(&values, p).unwrap();
        values.reverse();
        prop_assert_eq!(quantile(&values, p).unwrap(), q);
    }
}

#[test]
fn worked_examples() {
    let xs: Vec<f64> = (1..=10).map(f64::from).collect();
    assert!((quantile(&xs, 0.05).unwrap() - 1.45).abs() < 1e-12);
    assert_eq!(quantile(&xs, 0.5).unwrap(), 5.5);
    assert!((quantile(&[3.0, 9.0], 0.05).unwrap() - 3.3).abs() < 1e-12);
    assert_eq!(quantile(&[7.0], 0.3).unwrap(), 7.0);
}

#[test]
fn rejects_bad_input() {
    assert!(quantile(&[], 0.5).is_err());
    assert!(quantile(&[1.0], -0.1).is_err());
    assert!(quantile(&[1.0], 1.5).is_err());
    assert!(quantile(&[1.0], f64::NAN).is_err());
}
