//! Seeded synthetic multi-IMU repetitions with controllable class
//! structure, subject effects and simulated raters.
//!
//! Each channel of an exercise has a smooth template (two sinusoids plus a
//! Gaussian bump over normalised time). Rating 3 is the template; rating 2
//! attenuates its dynamic part; rating 1 truncates the movement phase.
//! Both also receive a class-specific per-channel offset. All deformations
//! scale with `class_effect`. Subject effects are per-subject channel
//! offsets plus per-(subject, rating) channel offsets, scaled by
//! `confound`. The fixtures are built for controllability, not realism.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use repscore_nn::rng::{derive_seed, seeded};

use crate::error::{config_err, Result};
use crate::exec::par_map;
use crate::labels::RatingRecord;
use crate::pipeline::{
    dataset_max_length, Channel, ChannelKey, Dataset, Exercise, Repetition, SensorLayout, Side, DEFAULT_SAMPLE_RATE_HZ,
};

/// Per-rater error probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaterSpec {
    /// Probability of reporting an adjacent score.
    pub adjacent: f64,
    /// Probability of reporting the score two steps away (only possible for
    /// true ratings 1 and 3).
    pub two_step: f64,
}

impl RaterSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(self.adjacent) || !ok(self.two_step) || self.adjacent + self.two_step > 1.0 {
            return config_err(format!(
                "rater error probabilities ({}, {}) must be in [0,1] and sum to at most 1",
                self.adjacent, self.two_step
            ));
        }
        Ok(())
    }

    /// Distribution of one rater's score given the true rating (1..=3).
    pub fn score_distribution(&self, truth: u8) -> [f64; 3] {
        let mut p = [0.0; 3];
        let t = truth as usize - 1;
        match truth {
            2 => {
                p[0] = self.adjacent / 2.0;
                p[2] = self.adjacent / 2.0;
                p[1] = 1.0 - self.adjacent;
            }
            _ => {
                let far = 2 - t;
                p[1] = self.adjacent;
                p[far] = self.two_step;
                p[t] = 1.0 - self.adjacent - self.two_step;
            }
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub subjects: usize,
    /// Repetitions per (subject, exercise, side).
    pub reps_per_cell: usize,
    pub exercises: Vec<Exercise>,
    pub imus: usize,
    /// Inclusive range of repetition lengths in samples.
    pub duration: [usize; 2],
    pub class_effect: f64,
    pub confound: f64,
    pub noise: f64,
    pub raters: RaterSpec,
    /// Cycle ratings 1, 2, 3 within each cell instead of drawing from the
    /// priors.
    pub balanced: bool,
    /// Rating priors keyed by "DS", "TSP", "HS-left", ...; missing keys
    /// fall back to uniform.
    #[serde(default)]
    pub label_priors: BTreeMap<String, [f64; 3]>,
    pub windows: usize,
    pub seed: u64,
}

/// Skewed per-exercise priors. HS-left has rating 2 fourteen times as often
/// as rating 1; TSP has ratings 1 and 3 1.5x and 2x as often as rating 2.
/// The remaining groups are illustrative.
pub fn default_priors() -> BTreeMap<String, [f64; 3]> {
    [
        ("DS", [0.15, 0.55, 0.30]),
        ("TSP", [1.5 / 4.5, 1.0 / 4.5, 2.0 / 4.5]),
        ("HS-left", [0.05, 0.70, 0.25]),
        ("HS-right", [0.10, 0.60, 0.30]),
        ("IL-left", [0.10, 0.30, 0.60]),
        ("IL-right", [0.10, 0.35, 0.55]),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            subjects: 17,
            reps_per_cell: 15,
            exercises: Exercise::ALL.to_vec(),
            imus: 3,
            duration: [240, 480],
            class_effect: 1.0,
            confound: 0.3,
            noise: 0.1,
            raters: RaterSpec {
                adjacent: 0.1,
                two_step: 0.02,
            },
            balanced: false,
            label_priors: default_priors(),
            windows: crate::arch::DEFAULT_WINDOWS,
            seed: 0,
        }
    }
}

/// Named generator configurations.
pub fn preset(name: &str) -> Result<GeneratorSpec> {
    let ds_small = GeneratorSpec {
        subjects: 12,
        reps_per_cell: 30,
        exercises: vec![Exercise::DS],
        imus: 2,
        duration: [100, 160],
        class_effect: 2.0,
        confound: 0.0,
        noise: 0.05,
        raters: RaterSpec {
            adjacent: 0.0,
            two_step: 0.0,
        },
        balanced: true,
        label_priors: BTreeMap::new(),
        windows: crate::arch::DEFAULT_WINDOWS,
        seed: 0,
    };
    Ok(match name {
        "default" => GeneratorSpec::default(),
        // separable, class-balanced, no subject effects
        "learnable" => ds_small,
        // subject signatures dominate the shared class signal
        "confounded" => GeneratorSpec {
            confound: 2.0,
            ..ds_small
        },
        "hs-left-skewed" => GeneratorSpec {
            exercises: vec![Exercise::HS],
            ..GeneratorSpec::default()
        },
        "tiny" => GeneratorSpec {
            subjects: 6,
            reps_per_cell: 6,
            exercises: vec![Exercise::DS],
            imus: 1,
            duration: [30, 48],
            windows: 4,
            raters: RaterSpec {
                adjacent: 0.1,
                two_step: 0.0,
            },
            ..ds_small
        },
        other => return config_err(format!("unknown preset '{other}' (default, learnable, confounded, hs-left-skewed, tiny)")),
    })
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 || self.reps_per_cell == 0 || self.imus == 0 || self.exercises.is_empty() {
            return config_err("subjects, reps_per_cell, imus and exercises must be non-empty");
        }
        if self.duration[0] == 0 || self.duration[0] > self.duration[1] {
            return config_err(format!("duration range {:?} must be positive and ordered", self.duration));
        }
        for (name, v) in [("class_effect", self.class_effect), ("confound", self.confound), ("noise", self.noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                return config_err(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.windows == 0 {
            return config_err("windows must be >= 1");
        }
        for (k, p) in &self.label_priors {
            let s: f64 = p.iter().sum();
            if p.iter().any(|&x| x < 0.0) || (s - 1.0).abs() > 1e-9 {
                return config_err(format!("label prior for {k} must be a probability vector, got {p:?}"));
            }
        }
        self.raters.validate()
    }
}

/// Dataset plus the labels the generator used.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub dataset: Dataset,
    pub truth: BTreeMap<String, u8>,
}

#[derive(Debug, Clone, Copy)]
struct Template {
    base: f64,
    a1: f64,
    f1: f64,
    p1: f64,
    a2: f64,
    f2: f64,
    p2: f64,
    bump: f64,
    mu: f64,
    width: f64,
    /// Class offset directions for ratings 1 and 2.
    dir: [f64; 2],
}

impl Template {
    fn draw(seed: u64) -> Self {
        let mut r = seeded(seed);
        Template {
            base: r.random_range(-1.0..1.0),
            a1: r.random_range(0.5..1.5),
            f1: r.random_range(0.5..1.5),
            p1: r.random_range(0.0..2.0 * PI),
            a2: r.random_range(0.2..0.6),
            f2: r.random_range(2.0..3.0),
            p2: r.random_range(0.0..2.0 * PI),
            bump: r.random_range(-1.5..1.5),
            mu: r.random_range(0.3..0.7),
            width: r.random_range(0.05..0.15),
            dir: [r.sample(StandardNormal), r.sample(StandardNormal)],
        }
    }

    fn dynamic(&self, tau: f64) -> f64 {
        self.a1 * (2.0 * PI * self.f1 * tau + self.p1).sin()
            + self.a2 * (2.0 * PI * self.f2 * tau + self.p2).sin()
            + self.bump * (-(tau - self.mu).powi(2) / (2.0 * self.width * self.width)).exp()
    }
}

/// Physical scale: accelerometer in g, gyrometer in °/s.
fn channel_scale(ch: Channel) -> f64 {
    if ch.is_accelerometer() {
        1.0
    } else {
        50.0
    }
}

fn exercise_code(e: Exercise) -> u64 {
    Exercise::ALL.iter().position(|x| *x == e).expect("listed") as u64
}

fn group_key(exercise: Exercise, side: Side) -> String {
    if exercise.is_sided() {
        format!("{exercise}-{side}")
    } else {
        exercise.to_string()
    }
}

struct Cell {
    subject: usize,
    exercise: Exercise,
    side: Side,
    rep: usize,
    label: u8,
}

/// Generates the dataset and the simulated ratings.
pub fn generate(spec: &GeneratorSpec, workers: usize) -> Result<Generated> {
    spec.validate()?;
    let layout = SensorLayout::numbered(spec.imus);
    let keys: Vec<ChannelKey> = layout.keys().collect();
    let seed = spec.seed;

    let mut cells = Vec::new();
    let mut label_rng = seeded(derive_seed(seed, 1));
    for s in 0..spec.subjects {
        for &exercise in &spec.exercises {
            let sides: &[Side] = if exercise.is_sided() { &[Side::Left, Side::Right] } else { &[Side::None] };
            for &side in sides {
                let prior = spec.label_priors.get(&group_key(exercise, side)).copied().unwrap_or([1.0 / 3.0; 3]);
                for rep in 0..spec.reps_per_cell {
                    let label = if spec.balanced {
                        (rep % 3) as u8 + 1
                    } else {
                        let u: f64 = label_rng.random();
                        if u < prior[0] {
                            1
                        } else if u < prior[0] + prior[1] {
                            2
                        } else {
                            3
                        }
                    };
                    cells.push(Cell {
                        subject: s,
                        exercise,
                        side,
                        rep,
                        label,
                    });
                }
            }
        }
    }

    // templates per (exercise, channel); subject offsets per (subject, channel)
    // and (subject, rating, channel)
    let template = |e: Exercise, k: usize| Template::draw(derive_seed(seed, (1 << 40) | (exercise_code(e) << 20) | k as u64));
    let offset = |stream: u64| -> f64 { seeded(derive_seed(seed, stream)).sample(StandardNormal) };

    let reps = par_map(&cells, workers, |i, c| {
        let mut rng = seeded(derive_seed(seed, (2 << 40) | i as u64));
        let len = rng.random_range(spec.duration[0]..=spec.duration[1]);
        let e = spec.class_effect;
        let amp = if c.label == 2 { 1.0 / (1.0 + 0.5 * e) } else { 1.0 };
        let reach = if c.label == 1 { 1.0 - 0.4 * (1.0 - (-e).exp()) } else { 1.0 };
        let mut streams = BTreeMap::new();
        for (k, key) in keys.iter().enumerate() {
            let t = template(c.exercise, k);
            let scale = channel_scale(key.channel);
            let class_shift = match c.label {
                1 => 0.5 * e * t.dir[0],
                2 => 0.5 * e * t.dir[1],
                _ => 0.0,
            };
            let subj = (c.subject as u64) << 24 | (exercise_code(c.exercise) << 16) | k as u64;
            let confound = spec.confound * (offset((3 << 40) | subj) + offset((4 << 40) | (u64::from(c.label) << 32) | subj));
            let level = t.base + class_shift + confound;
            let v: Vec<f64> = (0..len)
                .map(|i| {
                    let tau = if len > 1 { i as f64 / (len - 1) as f64 } else { 0.0 };
                    let noise: f64 = if spec.noise > 0.0 {
                        spec.noise * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    scale * (level + amp * t.dynamic(tau * reach) + noise)
                })
                .collect();
            streams.insert(key.clone(), v);
        }
        Repetition {
            id: format!("S{:02}_{}_{}_{:03}", c.subject + 1, c.exercise, c.side, c.rep),
            subject: format!("S{:02}", c.subject + 1),
            exercise: c.exercise,
            side: c.side,
            true_length: len,
            streams,
            label: None,
        }
    });

    let truth: BTreeMap<String, u8> = reps.iter().zip(&cells).map(|(r, c)| (r.id.clone(), c.label)).collect();
    let ids: Vec<String> = reps.iter().map(|r| r.id.clone()).collect();
    let labels: Vec<u8> = cells.iter().map(|c| c.label).collect();
    let ratings = simulate_raters(&ids, &labels, &spec.raters, derive_seed(seed, 5))?;
    let max_length = dataset_max_length(reps.iter().map(|r| r.true_length), spec.windows)?;
    Ok(Generated {
        dataset: Dataset {
            layout,
            windows: spec.windows,
            max_length: Some(max_length),
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            repetitions: reps,
            ratings,
            alignment: BTreeMap::new(),
        },
        truth,
    })
}

pub const RATERS: [&str; 3] = ["R1", "R2", "R3"];

/// Three independent raters per repetition, each erring per `rates`.
pub fn simulate_raters(ids: &[String], truth: &[u8], rates: &RaterSpec, seed: u64) -> Result<Vec<RatingRecord>> {
    rates.validate()?;
    if ids.len() != truth.len() {
        return config_err(format!("{} ids vs {} labels", ids.len(), truth.len()));
    }
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(ids.len() * 3);
    for (id, &t) in ids.iter().zip(truth) {
        if !(1..=3).contains(&t) {
            return config_err(format!("true label {t} for {id} outside 1..=3"));
        }
        let p = rates.score_distribution(t);
        for rater in RATERS {
            let u: f64 = rng.random();
            let score = if u < p[0] {
                1
            } else if u < p[0] + p[1] {
                2
            } else {
                3
            };
            out.push(RatingRecord {
                repetition_id: id.clone(),
                rater_id: rater.to_string(),
                score,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_distributions_are_normalised() {
        let r = RaterSpec {
            adjacent: 0.2,
            two_step: 0.05,
        };
        for t in 1..=3 {
            let p = r.score_distribution(t);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert_eq!(r.score_distribution(1), [0.75, 0.2, 0.05]);
        assert_eq!(r.score_distribution(2), [0.1, 0.8, 0.1]);
        assert_eq!(r.score_distribution(3), [0.05, 0.2, 0.75]);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = GeneratorSpec::default();
        s.duration = [10, 5];
        assert!(s.validate().is_err());
        let mut s = GeneratorSpec::default();
        s.raters.adjacent = 0.99;
        s.raters.two_step = 0.02;
        assert!(s.validate().is_err());
        assert!(preset("nope").is_err());
    }

    #[test]
    fn skewed_priors_encode_stated_ratios() {
        let p = default_priors();
        assert!((p["HS-left"][1] / p["HS-left"][0] - 14.0).abs() < 1e-12);
        assert!((p["TSP"][0] / p["TSP"][1] - 1.5).abs() < 1e-12);
        assert!((p["TSP"][2] / p["TSP"][1] - 2.0).abs() < 1e-12);
    }
}
