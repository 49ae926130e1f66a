//! Per-class metrics against direct counting over (actual, predicted) pairs.

use canids_core::metrics::{confusion, per_class, PerClassMetrics};
use canids_core::ClassLabel;
use proptest::prelude::*;

fn div(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

/// Counts outcomes pair by pair without building a confusion matrix.
fn oracle(actual: &[usize], predicted: &[usize], k: usize) -> PerClassMetrics {
    let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&a, &p) in actual.iter().zip(predicted) {
        match (a == k, p == k) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    PerClassMetrics {
        dr: div(tp, tp + fn_),
        fpr: div(fp, fp + tn),
        accuracy: div(tp + tn, tp + tn + fp + fn_),
        precision: div(tp, tp + fp),
        f1: div(2 * tp, 2 * tp + fp + fn_),
    }
}

fn pairs() -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
    (2usize..=6).prop_flat_map(|c| {
        (1usize..=50).prop_flat_map(move |n| {
            (
                Just(c),
                prop::collection::vec(0..c, n),
                prop::collection::vec(0..c, n),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn matches_pairwise_counting((c, actual, predicted) in pairs()) {
        let a: Vec<ClassLabel> = actual.iter().map(|&l| ClassLabel(l)).collect();
        let p: Vec<ClassLabel> = predicted.iter().map(|&l| ClassLabel(l)).collect();
        let m = confusion(&a, &p, c).unwrap();
        for k in 0..c {
            prop_assert_eq!(per_class(&m, k).unwrap(), oracle(&actual, &predicted, k));
        }
    }
}
