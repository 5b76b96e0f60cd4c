use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repscore_core::metrics::*;

/// Counts TP/FP/FN per class by scanning the pairs and uses
/// F1 = 2TP / (2TP + FP + FN), zero when the denominator is zero.
fn brute_force(truth: &[usize], pred: &[usize]) -> ([[usize; 3]; 3], f64) {
    let mut counts = [[0; 3]; 3];
    for t in 0..3 {
        for p in 0..3 {
            counts[t][p] = truth.iter().zip(pred).filter(|&(&a, &b)| a == t && b == p).count();
        }
    }
    let mut sum = 0.0;
    for k in 0..3 {
        let tp = truth.iter().zip(pred).filter(|&(&a, &b)| a == k && b == k).count() as f64;
        let fp = truth.iter().zip(pred).filter(|&(&a, &b)| a != k && b == k).count() as f64;
        let fn_ = truth.iter().zip(pred).filter(|&(&a, &b)| a == k && b != k).count() as f64;
        if 2.0 * tp + fp + fn_ > 0.0 {
            sum += 2.0 * tp / (2.0 * tp + fp + fn_);
        }
    }
    (counts, sum / 3.0)
}

#[test]
fn thousand_random_sets_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        // skewed draws so that empty classes occur regularly
        let bias = rng.random_range(0..3);
        let draw = |rng: &mut ChaCha8Rng| if rng.random_bool(0.3) { bias } else { rng.random_range(0..3) };
        let truth: Vec<usize> = (0..n).map(|_| draw(&mut rng)).collect();
        let pred: Vec<usize> = (0..n).map(|_| draw(&mut rng)).collect();
        let (counts, f1) = brute_force(&truth, &pred);
        let r = MetricsReport::from_predictions(&truth, &pred, None).unwrap();
        assert_eq!(r.confusion.counts, counts);
        assert!((r.macro_f1 - f1).abs() < 1e-12, "{} vs {f1}", r.macro_f1);
    }
}

#[test]
fn worked_example_is_one_third() {
    let c = Confusion {
        counts: [[2, 0, 0], [0, 0, 2], [0, 0, 0]],
    };
    assert!((macro_f1(&c) - 1.0 / 3.0).abs() < 1e-12);
    let r = MetricsReport::from_predictions(&[0, 0, 1, 1], &[0, 0, 2, 2], None).unwrap();
    assert_eq!(r.confusion, c);
    assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn probabilities_use_argmax_and_cross_entropy() {
    let probs = [[0.7, 0.2, 0.1], [0.1, 0.1, 0.8], [0.3, 0.4, 0.3]];
    let r = MetricsReport::from_probabilities(&[0, 2, 0], &probs).unwrap();
    assert_eq!(r.confusion.counts, [[1, 1, 0], [0, 0, 0], [0, 0, 1]]);
    let want = -(0.7f64.ln() + 0.8f64.ln() + 0.3f64.ln()) / 3.0;
    assert!((r.loss.unwrap() - want).abs() < 1e-12);
}

#[test]
fn invalid_inputs_rejected() {
    assert!(MetricsReport::from_predictions(&[], &[], None).is_err());
    assert!(MetricsReport::from_predictions(&[0, 1], &[0], None).is_err());
    assert!(MetricsReport::from_predictions(&[0, 3], &[0, 1], None).is_err());
}

#[test]
fn population_std() {
    let m = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]);
    assert!((m.mean - 2.5).abs() < 1e-15);
    assert!((m.std - 1.25f64.sqrt()).abs() < 1e-15);
    assert_eq!(format!("{m}"), "2.50 ± 1.12");
}

proptest! {
    #[test]
    fn relabelling_classes_preserves_macro_f1(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..80), perm in 0usize..6) {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let p = perms[perm];
        let (t, y): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let (t2, y2): (Vec<usize>, Vec<usize>) = pairs.iter().map(|&(a, b)| (p[a], p[b])).unzip();
        let a = MetricsReport::from_predictions(&t, &y, None).unwrap().macro_f1;
        let b = MetricsReport::from_predictions(&t2, &y2, None).unwrap().macro_f1;
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn perfect_predictions_score_by_present_classes(truth in prop::collection::vec(0usize..3, 1..50)) {
        let r = MetricsReport::from_predictions(&truth, &truth, None).unwrap();
        let present = (0..3).filter(|k| truth.contains(k)).count() as f64;
        prop_assert!((r.macro_f1 - present / 3.0).abs() < 1e-12);
    }
}
