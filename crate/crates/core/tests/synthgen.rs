use std::collections::BTreeMap;

use repscore_core::labels::{build_labeled_dataset, Category};
use repscore_core::pipeline::{arrange_channels, Exercise, Side};
use repscore_core::synthgen::*;

#[test]
fn generation_is_seed_and_worker_deterministic() {
    let spec = preset("tiny").unwrap();
    let a = generate(&spec, 1).unwrap();
    let b = generate(&spec, 0).unwrap();
    assert_eq!(a, b);
    let c = generate(&GeneratorSpec { seed: spec.seed + 1, ..spec.clone() }, 1).unwrap();
    assert_ne!(a.dataset.repetitions[0].streams, c.dataset.repetitions[0].streams);
}

#[test]
fn structure_follows_the_generator_spec() {
    let mut spec = preset("default").unwrap();
    spec.subjects = 3;
    spec.reps_per_cell = 2;
    let g = generate(&spec, 1).unwrap();
    let ds = &g.dataset;
    // DS, TSP unsided; HS, IL two sides each
    assert_eq!(ds.repetitions.len(), 3 * 2 * (1 + 1 + 2 + 2));
    assert_eq!(ds.ratings.len(), 3 * ds.repetitions.len());
    assert_eq!(ds.layout.rows(), 18);
    ds.validate().unwrap();
    for r in &ds.repetitions {
        assert!((spec.duration[0]..=spec.duration[1]).contains(&r.true_length));
        assert_eq!(r.exercise.is_sided(), r.side != Side::None);
        assert!(r.streams.values().all(|v| v.iter().all(|x| x.is_finite())));
    }
    let m = ds.max_length.unwrap();
    assert_eq!(m % spec.windows, 0);
    assert!(m >= ds.repetitions.iter().map(|r| r.true_length).max().unwrap());
    assert!(ds.repetitions.iter().any(|r| r.id == "S01_HS_left_000"));
    assert_eq!(g.truth.len(), ds.repetitions.len());
}

/// Resamples every channel to 16 points and appends the channel mean.
fn features(rep: &repscore_core::pipeline::Repetition, layout: &repscore_core::pipeline::SensorLayout) -> Vec<f64> {
    let m = arrange_channels(rep, layout).unwrap();
    let mut f = Vec::new();
    for r in 0..m.rows {
        let row = m.row(r);
        let scale = if r % 6 < 3 { 1.0 } else { 50.0 };
        for k in 0..16 {
            f.push(row[k * (row.len() - 1) / 15] / scale);
        }
        f.push(row.iter().sum::<f64>() / row.len() as f64 / scale);
    }
    f
}

fn nearest_centroid_loso_accuracy(g: &Generated) -> f64 {
    let ds = &g.dataset;
    let feats: Vec<Vec<f64>> = ds.repetitions.iter().map(|r| features(r, &ds.layout)).collect();
    let mut correct = 0;
    for subject in ds.subjects() {
        let mut centroids = vec![vec![0.0; feats[0].len()]; 3];
        let mut counts = [0usize; 3];
        for (r, f) in ds.repetitions.iter().zip(&feats) {
            if r.subject != subject {
                let c = g.truth[&r.id] as usize - 1;
                counts[c] += 1;
                centroids[c].iter_mut().zip(f).for_each(|(a, b)| *a += b);
            }
        }
        for (c, n) in centroids.iter_mut().zip(counts) {
            c.iter_mut().for_each(|v| *v /= n as f64);
        }
        for (r, f) in ds.repetitions.iter().zip(&feats) {
            if r.subject == subject {
                let dist = |c: &Vec<f64>| c.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                let pred = (0..3).min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b]))).unwrap();
                correct += usize::from(pred + 1 == g.truth[&r.id] as usize);
            }
        }
    }
    correct as f64 / ds.repetitions.len() as f64
}

#[test]
fn learnable_preset_is_separable_by_a_simple_oracle() {
    let g = generate(&preset("learnable").unwrap(), 1).unwrap();
    let acc = nearest_centroid_loso_accuracy(&g);
    assert!(acc > 0.9, "nearest-centroid LOSO accuracy {acc}");
}

#[test]
fn without_class_effect_the_oracle_is_at_chance() {
    let spec = GeneratorSpec {
        class_effect: 0.0,
        ..preset("learnable").unwrap()
    };
    let acc = nearest_centroid_loso_accuracy(&generate(&spec, 1).unwrap());
    assert!(acc < 0.5, "accuracy {acc} without any class signal");
}

/// Closed-form category probabilities for three iid raters with per-rating
/// distribution `q`.
fn closed_form(q: [f64; 3]) -> BTreeMap<Category, f64> {
    let mut minor = 0.0;
    let mut major = 0.0;
    for m in 0..3 {
        for d in 0..3 {
            let p = 3.0 * q[m] * q[m] * q[d];
            match m.abs_diff(d) {
                1 => minor += p,
                2 => major += p,
                _ => {}
            }
        }
    }
    BTreeMap::from([
        (Category::Unambiguous, q.iter().map(|x| x.powi(3)).sum()),
        (Category::MajorityMinor, minor),
        (Category::MajorityMajor, major),
        (Category::NoMajority, 6.0 * q[0] * q[1] * q[2]),
    ])
}

#[test]
fn rater_category_shares_match_closed_form() {
    let rates = RaterSpec {
        adjacent: 0.1,
        two_step: 0.03,
    };
    let n = 10_000;
    let truth: Vec<u8> = (0..n).map(|i| (i % 3) as u8 + 1).collect();
    let ids: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
    let ratings = simulate_raters(&ids, &truth, &rates, 99).unwrap();
    let mut by: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for r in &ratings {
        by.entry(&r.repetition_id).or_default().push(r.score);
    }
    let mut counts: BTreeMap<Category, f64> = BTreeMap::new();
    for s in by.values() {
        let c = repscore_core::labels::aggregate([s[0], s[1], s[2]]).unwrap().category;
        *counts.entry(c).or_default() += 1.0;
    }
    // expected count and variance summed over repetitions (independent,
    // not identically distributed)
    let mut mean: BTreeMap<Category, f64> = BTreeMap::new();
    let mut var: BTreeMap<Category, f64> = BTreeMap::new();
    for &t in &truth {
        for (c, p) in closed_form(rates.score_distribution(t)) {
            *mean.entry(c).or_default() += p;
            *var.entry(c).or_default() += p * (1.0 - p);
        }
    }
    for c in Category::ALL {
        let got = counts.get(&c).copied().unwrap_or(0.0);
        let z = (got - mean[&c]).abs() / var[&c].sqrt();
        assert!(z < 3.0, "{c:?}: {got} vs {:.1} (z {z:.2})", mean[&c]);
    }
}

#[test]
fn hs_left_prior_skew_is_reproduced() {
    let mut spec = preset("hs-left-skewed").unwrap();
    spec.reps_per_cell = 200;
    spec.raters.adjacent = 0.0;
    spec.raters.two_step = 0.0;
    let g = generate(&spec, 1).unwrap();
    let (labeled, report) = build_labeled_dataset(&g.dataset).unwrap();
    assert_eq!(labeled.repetitions.len(), g.dataset.repetitions.len());
    let hist = report.histograms["HS-left"];
    let n: usize = hist.iter().sum();
    let p = default_priors()["HS-left"];
    for k in 0..3 {
        let sigma = (n as f64 * p[k] * (1.0 - p[k])).sqrt();
        assert!((hist[k] as f64 - n as f64 * p[k]).abs() < 3.0 * sigma, "rating {}: {} of {n}", k + 1, hist[k]);
    }
    assert!(hist[1] > 8 * hist[0], "{hist:?}");
    assert!(labeled.repetitions.iter().all(|r| r.exercise == Exercise::HS));
}

#[test]
fn confound_makes_subjects_distinguishable() {
    // with confound, a subject's own repetitions sit closer to each other
    // than to other subjects'
    let spec = GeneratorSpec {
        subjects: 4,
        ..preset("confounded").unwrap()
    };
    let g = generate(&spec, 1).unwrap();
    let ds = &g.dataset;
    let mean_of = |s: &str| -> Vec<f64> {
        let reps: Vec<_> = ds.repetitions.iter().filter(|r| r.subject == s).collect();
        let f: Vec<Vec<f64>> = reps.iter().map(|r| features(r, &ds.layout)).collect();
        (0..f[0].len()).map(|j| f.iter().map(|v| v[j]).sum::<f64>() / f.len() as f64).collect()
    };
    let subjects = ds.subjects();
    let a = mean_of(&subjects[0]);
    let b = mean_of(&subjects[1]);
    let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!(d > 1.0, "subject means only {d} apart");
}
