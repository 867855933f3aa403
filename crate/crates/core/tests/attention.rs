use distsum_core::model::pointer::{attend, attend_logits};
use proptest::prelude::*;

fn logits_strategy() -> impl Strategy<Value = Vec<f64>> {
    (1usize..=256).prop_flat_map(|m| proptest::collection::vec(-50.0f64..50.0, m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn weights_sum_to_one(logits in logits_strategy()) {
        let a = attend_logits(&logits);
        prop_assert_eq!(a.len(), logits.len());
        prop_assert!(a.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_shift_leaves_weights_unchanged(logits in logits_strategy(), c in -500.0f64..500.0) {
        let a = attend_logits(&logits);
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        let b = attend_logits(&shifted);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6, "{} vs {}", x, y);
        }
    }

    #[test]
    fn matrix_form_matches_naive_softmax(
        (m, h, s, e) in (1usize..=64, 1usize..=8).prop_flat_map(|(m, h)| (
            Just(m),
            Just(h),
            proptest::collection::vec(-3.0f64..3.0, m * h),
            proptest::collection::vec(-3.0f64..3.0, h),
        ))
    ) {
        let a = attend(&s, &e);
        let logits: Vec<f64> = (0..m).map(|i| (0..h).map(|j| s[i * h + j] * e[j]).sum()).collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        for (x, l) in a.iter().zip(&logits) {
            prop_assert!((x - l.exp() / z).abs() < 1e-12);
        }
    }
}

#[test]
fn extreme_logits_stay_finite() {
    let a = attend_logits(&[1e4, -1e4, 1e4]);
    assert_eq!(a, vec![0.5, 0.0, 0.5]);
    let a = attend_logits(&[-1e4]);
    assert_eq!(a, vec![1.0]);
    let a = attend_logits(&[0.0f32; 4]);
    assert_eq!(a, vec![0.25f32; 4]);
}
