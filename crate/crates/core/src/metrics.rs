//! Confusion matrix and per-class / macro F1 for the three rating classes.

use serde::{Deserialize, Serialize};

use crate::arch::CLASSES;
use crate::error::{data_err, Result};

/// `counts[true][predicted]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[usize; CLASSES]; CLASSES],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize]) -> Result<Confusion> {
    if truth.len() != predicted.len() {
        return data_err(format!("{} labels vs {} predictions", truth.len(), predicted.len()));
    }
    let mut c = Confusion::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= CLASSES || p >= CLASSES {
            return data_err(format!("class index out of range: truth {t}, predicted {p}"));
        }
        c.counts[t][p] += 1;
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Precision/recall/F1 per class; any zero denominator yields 0.
    pub fn per_class(&self) -> [ClassMetrics; CLASSES] {
        std::array::from_fn(|k| {
            let tp = self.counts[k][k];
            let support: usize = self.counts[k].iter().sum();
            let predicted: usize = (0..CLASSES).map(|t| self.counts[t][k]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
    }
}

/// Arithmetic mean of the three class F1 scores.
pub fn macro_f1(c: &Confusion) -> f64 {
    c.per_class().iter().map(|m| m.f1).sum::<f64>() / CLASSES as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: Confusion,
    pub per_class: [ClassMetrics; CLASSES],
    pub macro_f1: f64,
    /// Mean cross-entropy, when probabilities were available.
    pub loss: Option<f64>,
}

impl MetricsReport {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], loss: Option<f64>) -> Result<Self> {
        if truth.is_empty() {
            return data_err("cannot evaluate an empty set");
        }
        let confusion = confusion_matrix(truth, predicted)?;
        Ok(MetricsReport {
            confusion,
            per_class: confusion.per_class(),
            macro_f1: macro_f1(&confusion),
            loss,
        })
    }

    /// Report from `n x 3` probability rows (argmax prediction, first max
    /// wins ties).
    pub fn from_probabilities(truth: &[usize], probs: &[[f64; CLASSES]]) -> Result<Self> {
        if truth.len() != probs.len() {
            return data_err(format!("{} labels vs {} probability rows", truth.len(), probs.len()));
        }
        let predicted: Vec<usize> = probs.iter().map(argmax).collect();
        let loss = if truth.is_empty() {
            None
        } else {
            Some(truth.iter().zip(probs).map(|(&t, p)| -p[t.min(CLASSES - 1)].max(f64::MIN_POSITIVE).ln()).sum::<f64>() / truth.len() as f64)
        };
        Self::from_predictions(truth, &predicted, loss)
    }
}

pub fn argmax(p: &[f64; CLASSES]) -> usize {
    let mut best = 0;
    for k in 1..CLASSES {
        if p[k] > p[best] {
            best = k;
        }
    }
    best
}

/// JSON has no NaN; undefined statistics travel as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Mean and population standard deviation; NaN for an empty sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    #[serde(with = "nan_as_null")]
    pub mean: f64,
    #[serde(with = "nan_as_null")]
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.mean.is_nan() {
            return f.write_str("n/a");
        }
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stats_survive_json() {
        let m = MeanStd::of(&[]);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"mean":null,"std":null}"#);
        let back: MeanStd = serde_json::from_str(&s).unwrap();
        assert!(back.mean.is_nan() && back.std.is_nan());
        assert_eq!(m.to_string(), "n/a");
    }

    #[test]
    fn worked_example() {
        let c = Confusion {
            counts: [[2, 0, 0], [0, 0, 2], [0, 0, 0]],
        };
        let f: Vec<f64> = c.per_class().iter().map(|m| m.f1).collect();
        assert_eq!(f, vec![1.0, 0.0, 0.0]);
        assert!((macro_f1(&c) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions() {
        let t = vec![0, 1, 2, 2, 1];
        let r = MetricsReport::from_predictions(&t, &t, None).unwrap();
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn empty_set_rejected() {
        assert!(MetricsReport::from_predictions(&[], &[], None).is_err());
    }

    #[test]
    fn single_value_has_zero_std() {
        assert_eq!(MeanStd::of(&[0.7]).std, 0.0);
    }
}
