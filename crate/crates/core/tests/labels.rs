use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repscore_core::labels::*;
use repscore_core::pipeline::Dataset;
use repscore_core::synthgen::{generate, preset};

/// Pair-by-pair evaluation of alpha: every ordered pair of ratings within a
/// unit counts towards disagreement with weight 1/(m_u − 1); expected
/// disagreement is over all ordered pairs of pairable ratings.
fn pair_oracle(units: &[Vec<u32>], metric: Metric) -> f64 {
    let pairable: Vec<&Vec<u32>> = units.iter().filter(|u| u.len() >= 2).collect();
    let all: Vec<u32> = pairable.iter().flat_map(|u| u.iter().copied()).collect();
    let n = all.len() as f64;
    let freq = |g: u32| all.iter().filter(|&&v| v == g).count() as f64;
    let delta = |a: u32, b: u32| -> f64 {
        match metric {
            Metric::Nominal => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
            Metric::Interval => (a as f64 - b as f64).powi(2),
            Metric::Ordinal => {
                let (lo, hi) = (a.min(b), a.max(b));
                let mut s = 0.0;
                for g in lo..=hi {
                    s += freq(g);
                }
                (s - (freq(lo) + freq(hi)) / 2.0).powi(2)
            }
        }
    };
    let mut d_o = 0.0;
    for u in &pairable {
        let mut s = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    s += delta(u[i], u[j]);
                }
            }
        }
        d_o += s / (u.len() as f64 - 1.0);
    }
    d_o /= n;
    let mut d_e = 0.0;
    for i in 0..all.len() {
        for j in 0..all.len() {
            if i != j {
                d_e += delta(all[i], all[j]);
            }
        }
    }
    d_e /= n * (n - 1.0);
    1.0 - d_o / d_e
}

const METRICS: [Metric; 3] = [Metric::Nominal, Metric::Ordinal, Metric::Interval];

#[test]
fn perfect_agreement_is_one() {
    let units = vec![vec![1, 1, 1], vec![2, 2, 2], vec![3, 3, 3], vec![2, 2, 2]];
    for m in METRICS {
        assert_eq!(alpha_from_units(&units, m).unwrap(), 1.0);
    }
}

#[test]
fn two_unit_hand_example() {
    // units {1,2} and {2,1}: o(1,2) = o(2,1) = 2, n1 = n2 = 2, n = 4.
    // observed = 4, expected = 2·2·2 = 8 → alpha = 1 − 3·4/8 = −0.5
    let units = vec![vec![1, 2], vec![2, 1]];
    assert!((alpha_from_units(&units, Metric::Nominal).unwrap() + 0.5).abs() < 1e-12);
}

#[test]
fn published_four_observer_example() {
    // Krippendorff's 4-observer, 12-unit reliability example with missing
    // values; reference values are published to three decimals.
    let rows: [[Option<u32>; 12]; 4] = {
        let n = None;
        let s = Some;
        [
            [s(1), s(2), s(3), s(3), s(2), s(1), s(4), s(1), s(2), n, n, n],
            [s(1), s(2), s(3), s(3), s(2), s(2), s(4), s(1), s(2), s(5), n, s(3)],
            [n, s(3), s(3), s(3), s(2), s(3), s(4), s(2), s(2), s(5), s(1), n],
            [s(1), s(2), s(3), s(3), s(2), s(4), s(4), s(1), s(2), s(5), s(1), n],
        ]
    };
    let units: Vec<Vec<u32>> = (0..12).map(|u| rows.iter().filter_map(|r| r[u]).collect()).collect();
    for (m, want) in [(Metric::Nominal, 0.743), (Metric::Ordinal, 0.815), (Metric::Interval, 0.849)] {
        let got = alpha_from_units(&units, m).unwrap();
        assert!((got - want).abs() < 5e-4, "{m:?}: {got} vs {want}");
        assert!((got - pair_oracle(&units, m)).abs() < 1e-10);
    }
}

#[test]
fn six_unit_matrices_match_pair_oracle() {
    let fixtures: Vec<Vec<Vec<u32>>> = vec![
        vec![vec![1, 1, 1], vec![1, 1, 2], vec![2, 2, 2], vec![3, 3, 3], vec![1, 2, 3], vec![2, 3, 3]],
        vec![vec![1, 2, 2], vec![2, 2, 3], vec![3, 3, 1], vec![2, 2, 2], vec![1, 1, 3], vec![3, 2, 3]],
        vec![vec![2, 2, 2], vec![2, 2, 2], vec![2, 2, 1], vec![2, 3, 2], vec![1, 1, 1], vec![3, 3, 3]],
        vec![vec![1, 3], vec![3, 1, 1], vec![2, 2], vec![1, 2, 3], vec![3], vec![2, 2, 3]],
    ];
    for units in &fixtures {
        for m in METRICS {
            let got = alpha_from_units(units, m).unwrap();
            let want = pair_oracle(units, m);
            assert!((got - want).abs() < 1e-10, "{m:?} {units:?}: {got} vs {want}");
        }
    }
}

#[test]
fn uniform_random_ratings_have_alpha_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let units: Vec<Vec<u32>> = (0..10_000).map(|_| (0..3).map(|_| rng.random_range(1..=3)).collect()).collect();
    for m in METRICS {
        let a = alpha_from_units(&units, m).unwrap();
        assert!(a.abs() < 0.05, "{m:?}: {a}");
    }
}

#[test]
fn adjacent_only_disagreement_scores_higher_under_ordinal() {
    let units = vec![vec![1, 1, 2], vec![2, 2, 3], vec![3, 3, 3], vec![1, 1, 1], vec![2, 3, 3], vec![2, 2, 2], vec![1, 2, 2]];
    let nominal = alpha_from_units(&units, Metric::Nominal).unwrap();
    let ordinal = alpha_from_units(&units, Metric::Ordinal).unwrap();
    assert!(ordinal >= nominal, "{ordinal} < {nominal}");
}

proptest! {
    #[test]
    fn agrees_with_pair_oracle(units in prop::collection::vec(prop::collection::vec(1u32..=4, 1..5), 2..15)) {
        let pairable: Vec<u32> = units.iter().filter(|u| u.len() >= 2).flatten().copied().collect();
        prop_assume!(units.iter().filter(|u| u.len() >= 2).count() >= 2);
        prop_assume!(pairable.iter().any(|&v| v != pairable[0]));
        for m in METRICS {
            let got = alpha_from_units(&units, m).unwrap();
            prop_assert!((got - pair_oracle(&units, m)).abs() < 1e-10);
        }
    }

    #[test]
    fn adding_dissent_never_raises_alpha(base in prop::collection::vec(1u32..=3, 6..20), flip in 0usize..20) {
        // perfect agreement everywhere, then one rater dissents in one unit
        let units: Vec<Vec<u32>> = base.iter().map(|&v| vec![v, v, v]).collect();
        prop_assume!(base.iter().any(|&v| v != base[0]));
        let mut noisy = units.clone();
        let i = flip % noisy.len();
        noisy[i][2] = if noisy[i][2] == 3 { 1 } else { noisy[i][2] + 1 };
        for m in METRICS {
            prop_assert!(alpha_from_units(&noisy, m).unwrap() < alpha_from_units(&units, m).unwrap());
        }
    }

    #[test]
    fn majority_vote_is_permutation_invariant(a in 1u8..=3, b in 1u8..=3, c in 1u8..=3) {
        let r = aggregate([a, b, c]).unwrap();
        for p in [[a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            prop_assert_eq!(aggregate(p).unwrap(), r);
        }
        let distinct = [a, b, c].iter().collect::<std::collections::BTreeSet<_>>().len();
        prop_assert_eq!(r.final_label.is_none(), distinct == 3);
    }
}

#[test]
fn categories_follow_dissent_distance() {
    let cat = |s| aggregate(s).unwrap();
    assert_eq!(cat([2, 2, 2]).category, Category::Unambiguous);
    assert_eq!(cat([1, 2, 1]), AgreementResult { final_label: Some(1), category: Category::MajorityMinor });
    assert_eq!(cat([3, 1, 3]), AgreementResult { final_label: Some(3), category: Category::MajorityMajor });
    assert_eq!(cat([1, 2, 3]), AgreementResult { final_label: None, category: Category::NoMajority });
    assert!(aggregate([0, 1, 1]).is_err());
    assert!(aggregate([4, 1, 1]).is_err());
}

#[test]
fn labeling_excludes_ambiguous_and_incomplete_repetitions() {
    let mut spec = preset("tiny").unwrap();
    spec.raters.adjacent = 0.5;
    let g = generate(&spec, 1).unwrap();
    let mut ds: Dataset = g.dataset.clone();
    // drop one rating of the first repetition
    let first = ds.repetitions[0].id.clone();
    let pos = ds.ratings.iter().position(|r| r.repetition_id == first).unwrap();
    ds.ratings.remove(pos);
    let (labeled, report) = build_labeled_dataset(&ds).unwrap();
    let mut by: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for r in &ds.ratings {
        by.entry(&r.repetition_id).or_default().push(r.score);
    }
    let no_majority: Vec<&str> = by
        .iter()
        .filter(|(_, s)| s.len() == 3 && s[0] != s[1] && s[0] != s[2] && s[1] != s[2])
        .map(|(id, _)| *id)
        .collect();
    assert!(!no_majority.is_empty());
    for id in &no_majority {
        assert!(labeled.repetitions.iter().all(|r| r.id != *id));
        assert!(report.excluded.iter().any(|e| e.repetition_id == *id));
    }
    assert!(labeled.repetitions.iter().all(|r| r.id != first));
    assert_eq!(report.retained + report.excluded.len(), report.total);
    assert_eq!(labeled.repetitions.len(), report.retained);
    assert!(labeled.repetitions.iter().all(|r| r.label.is_some()));
    assert_eq!(report.histograms.values().flatten().sum::<usize>(), report.retained);
}
