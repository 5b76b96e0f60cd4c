//! Rater aggregation and inter-rater reliability.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{data_err, CoreError, Result};
use crate::pipeline::{Dataset, Exercise};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RatingRecord {
    pub repetition_id: String,
    pub rater_id: String,
    pub score: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Unambiguous,
    MajorityMinor,
    MajorityMajor,
    NoMajority,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Unambiguous,
        Category::MajorityMinor,
        Category::MajorityMajor,
        Category::NoMajority,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Unambiguous => "unambiguous",
            Category::MajorityMinor => "majority_minor",
            Category::MajorityMajor => "majority_major",
            Category::NoMajority => "no_majority",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub final_label: Option<u8>,
    pub category: Category,
}

/// Majority vote over three scores.
pub fn aggregate(scores: [u8; 3]) -> Result<AgreementResult> {
    if let Some(s) = scores.iter().find(|s| !(1..=3).contains(*s)) {
        return data_err(format!("score {s} outside 1..=3"));
    }
    let [a, b, c] = scores;
    let (majority, dissent) = if a == b {
        (a, c)
    } else if a == c {
        (a, b)
    } else if b == c {
        (b, a)
    } else {
        return Ok(AgreementResult {
            final_label: None,
            category: Category::NoMajority,
        });
    };
    let category = match majority.abs_diff(dissent) {
        0 => Category::Unambiguous,
        1 => Category::MajorityMinor,
        _ => Category::MajorityMajor,
    };
    Ok(AgreementResult {
        final_label: Some(majority),
        category,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Nominal,
    Ordinal,
    Interval,
}

/// Krippendorff's alpha from per-unit value lists (missing ratings simply
/// absent). Units with fewer than two values are not pairable and ignored.
pub fn alpha_from_units(units: &[Vec<u32>], metric: Metric) -> Result<f64> {
    let pairable: Vec<&Vec<u32>> = units.iter().filter(|u| u.len() >= 2).collect();
    if pairable.len() < 2 {
        return data_err(format!("need at least 2 units with >= 2 ratings, found {}", pairable.len()));
    }
    let mut values: Vec<u32> = pairable.iter().flat_map(|u| u.iter().copied()).collect();
    values.sort_unstable();
    values.dedup();
    let k = values.len();
    let idx = |v: u32| values.binary_search(&v).expect("value collected above");

    // coincidence matrix
    let mut o = vec![0.0; k * k];
    for u in &pairable {
        let w = 1.0 / (u.len() as f64 - 1.0);
        for (i, &a) in u.iter().enumerate() {
            for (j, &b) in u.iter().enumerate() {
                if i != j {
                    o[idx(a) * k + idx(b)] += w;
                }
            }
        }
    }
    let n_c: Vec<f64> = (0..k).map(|c| (0..k).map(|j| o[c * k + j]).sum()).collect();
    let n: f64 = n_c.iter().sum();

    let delta2 = |c: usize, d: usize| -> f64 {
        match metric {
            Metric::Nominal => f64::from(u8::from(c != d)),
            Metric::Interval => {
                let diff = values[c] as f64 - values[d] as f64;
                diff * diff
            }
            Metric::Ordinal => {
                let (lo, hi) = (c.min(d), c.max(d));
                let s: f64 = n_c[lo..=hi].iter().sum::<f64>() - (n_c[lo] + n_c[hi]) / 2.0;
                s * s
            }
        }
    };
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            let dd = delta2(c, d);
            observed += o[c * k + d] * dd;
            expected += n_c[c] * n_c[d] * dd;
        }
    }
    if expected == 0.0 {
        log::warn!("all pairable ratings are identical; alpha defined as 1");
        return Ok(1.0);
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

pub fn krippendorff_alpha(records: &[RatingRecord], metric: Metric) -> Result<f64> {
    let mut units: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for r in records {
        units.entry(r.repetition_id.as_str()).or_default().push(u32::from(r.score));
    }
    alpha_from_units(&units.into_values().collect::<Vec<_>>(), metric)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub repetition_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub total: usize,
    pub retained: usize,
    pub excluded: Vec<Exclusion>,
    /// Repetition id → (final label, category) for every repetition with
    /// exactly three ratings.
    pub agreement: BTreeMap<String, AgreementResult>,
    pub category_counts: BTreeMap<Category, usize>,
    /// Histogram of retained final labels 1/2/3 per exercise (and side for
    /// sided exercises), keyed like "HS-left".
    pub histograms: BTreeMap<String, [usize; 3]>,
    pub alpha_all: Option<f64>,
    pub alpha_retained: Option<f64>,
}

impl LabelReport {
    /// Category shares over repetitions with three ratings.
    pub fn category_shares(&self) -> BTreeMap<Category, f64> {
        let n: usize = self.category_counts.values().sum();
        Category::ALL
            .iter()
            .map(|c| {
                let k = self.category_counts.get(c).copied().unwrap_or(0);
                (*c, if n == 0 { 0.0 } else { k as f64 / n as f64 })
            })
            .collect()
    }
}

fn group_key(exercise: Exercise, side: crate::pipeline::Side) -> String {
    if exercise.is_sided() {
        format!("{exercise}-{side}")
    } else {
        exercise.to_string()
    }
}

/// Assigns majority-vote labels and drops repetitions without one.
///
/// Repetitions with no ratings, or with a rating count other than three,
/// are excluded and listed. Alpha is reported over all ratings and over
/// the ratings of retained repetitions only.
pub fn build_labeled_dataset(dataset: &Dataset) -> Result<(Dataset, LabelReport)> {
    let mut by_rep: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for r in &dataset.ratings {
        by_rep.entry(r.repetition_id.as_str()).or_default().push(r.score);
    }
    let mut report = LabelReport {
        total: dataset.repetitions.len(),
        retained: 0,
        excluded: Vec::new(),
        agreement: BTreeMap::new(),
        category_counts: Category::ALL.iter().map(|c| (*c, 0)).collect(),
        histograms: BTreeMap::new(),
        alpha_all: None,
        alpha_retained: None,
    };
    let mut out = dataset.clone();
    out.repetitions.clear();
    for rep in &dataset.repetitions {
        let scores = by_rep.get(rep.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let reason = match scores {
            [] => Some("no ratings".to_string()),
            &[a, b, c] => {
                let res = aggregate([a, b, c]).map_err(|e| CoreError::Data(format!("repetition {}: {e}", rep.id)))?;
                *report.category_counts.entry(res.category).or_default() += 1;
                report.agreement.insert(rep.id.clone(), res);
                match res.final_label {
                    Some(l) => {
                        let mut r = rep.clone();
                        r.label = Some(l);
                        report.histograms.entry(group_key(rep.exercise, rep.side)).or_insert([0; 3])[l as usize - 1] += 1;
                        out.repetitions.push(r);
                        None
                    }
                    None => Some("no majority among the three ratings".to_string()),
                }
            }
            other => Some(format!("expected 3 ratings, found {}", other.len())),
        };
        if let Some(reason) = reason {
            log::warn!("excluding repetition {}: {reason}", rep.id);
            report.excluded.push(Exclusion {
                repetition_id: rep.id.clone(),
                reason,
            });
        }
    }
    report.retained = out.repetitions.len();
    report.alpha_all = krippendorff_alpha(&dataset.ratings, Metric::Ordinal).ok();
    let kept: std::collections::BTreeSet<&str> = out.repetitions.iter().map(|r| r.id.as_str()).collect();
    let retained_ratings: Vec<RatingRecord> = dataset
        .ratings
        .iter()
        .filter(|r| kept.contains(r.repetition_id.as_str()))
        .cloned()
        .collect();
    report.alpha_retained = krippendorff_alpha(&retained_ratings, Metric::Ordinal).ok();
    out.ratings = retained_ratings;
    Ok((out, report))
}
