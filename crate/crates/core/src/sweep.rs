//! Seeded random search over the hyperparameter grid with k-fold LOSO
//! scoring and a resumable leaderboard.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use repscore_nn::optim::DEFAULT_LEARNING_RATE;
use repscore_nn::rng::{derive_seed, seeded};
use repscore_nn::Activation;

use crate::arch::{ModelConfig, Regularization, Scheme};
use crate::error::{config_err, data_err, CoreError, Result};
use crate::exec::{effective_workers, par_map};
use crate::harness::{pretty, run_experiment, ExperimentOptions, OnDivergence, Selection, TrainOptions};
use crate::pipeline::Dataset;

pub const DEFAULT_SWEEP_EPOCHS: usize = 15;
pub const DEFAULT_SWEEP_SIZE: usize = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub activation: Vec<Activation>,
    pub cnn_blocks: Vec<usize>,
    pub scheme: Vec<Scheme>,
    pub regularization: Vec<Regularization>,
    pub lstm_layers: Vec<usize>,
    pub batch_size: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            activation: vec![Activation::Relu, Activation::Elu, Activation::Lrelu],
            cnn_blocks: vec![1, 2, 3],
            scheme: vec![Scheme::IncFiltersFixedKernel, Scheme::IncFiltersDecKernel],
            regularization: vec![Regularization::Dropout, Regularization::Batchnorm],
            lstm_layers: vec![1, 2],
            batch_size: vec![4, 8, 16, 32],
        }
    }
}

impl SearchSpace {
    fn axis_lens(&self) -> [usize; 6] {
        [
            self.activation.len(),
            self.cnn_blocks.len(),
            self.scheme.len(),
            self.regularization.len(),
            self.lstm_layers.len(),
            self.batch_size.len(),
        ]
    }

    pub fn combinations(&self) -> usize {
        self.axis_lens().iter().product()
    }

    fn config(&self, pick: [usize; 6], base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            activation: self.activation[pick[0]],
            cnn_blocks: self.cnn_blocks[pick[1]],
            scheme: self.scheme[pick[2]],
            regularization: self.regularization[pick[3]],
            lstm_layers: self.lstm_layers[pick[4]],
            batch_size: self.batch_size[pick[5]],
            ..base.clone()
        }
    }

    pub fn validate(&self, base: &ModelConfig) -> Result<()> {
        const NAMES: [&str; 6] = ["activation", "cnn_blocks", "scheme", "regularization", "lstm_layers", "batch_size"];
        for (name, len) in NAMES.iter().zip(self.axis_lens()) {
            if len == 0 {
                return config_err(format!("search axis '{name}' is empty"));
            }
        }
        // every axis value must yield a valid configuration
        for axis in 0..6 {
            for v in 0..self.axis_lens()[axis] {
                let mut pick = [0; 6];
                pick[axis] = v;
                self.config(pick, base).validate()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Independent uniform draw per axis; duplicates possible.
    Random,
    /// Distinct combinations in seeded order.
    Exhaustive,
}

/// Draws `n` configurations; axes not in the space come from `base`.
pub fn sample_configs(space: &SearchSpace, n: usize, seed: u64, mode: SamplingMode, base: &ModelConfig) -> Result<Vec<ModelConfig>> {
    if n == 0 {
        return config_err("number of configurations must be >= 1");
    }
    space.validate(base)?;
    let lens = space.axis_lens();
    let mut rng = seeded(derive_seed(seed, 0x5ee9));
    match mode {
        SamplingMode::Random => Ok((0..n)
            .map(|_| {
                let pick = lens.map(|l| rng.random_range(0..l));
                space.config(pick, base)
            })
            .collect()),
        SamplingMode::Exhaustive => {
            let total = space.combinations();
            if n > total {
                return config_err(format!("exhaustive mode: {n} requested but the space has {total} combinations"));
            }
            let mut all: Vec<usize> = (0..total).collect();
            all.shuffle(&mut rng);
            Ok(all[..n]
                .iter()
                .map(|&flat| {
                    let mut rem = flat;
                    let mut pick = [0; 6];
                    for axis in (0..6).rev() {
                        pick[axis] = rem % lens[axis];
                        rem /= lens[axis];
                    }
                    space.config(pick, base)
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub n: usize,
    pub folds: usize,
    pub epochs: usize,
    pub seed: u64,
    pub mode: SamplingMode,
    pub selection: Option<Selection>,
    pub base: ModelConfig,
    pub learning_rate: f64,
    pub patience: Option<usize>,
    pub stratified: bool,
    /// Parallel config workers (0 = all cores).
    #[serde(skip)]
    pub workers: usize,
    /// Evaluate at most this many new configurations in this invocation.
    #[serde(skip)]
    pub stop_after: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            n: DEFAULT_SWEEP_SIZE,
            folds: 5,
            epochs: DEFAULT_SWEEP_EPOCHS,
            seed: 0,
            mode: SamplingMode::Random,
            selection: Some(Selection::Ds),
            base: ModelConfig::best(),
            learning_rate: DEFAULT_LEARNING_RATE,
            patience: None,
            stratified: true,
            workers: 1,
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub rank: usize,
    pub index: usize,
    pub config: ModelConfig,
    pub fold_train_f1: Vec<f64>,
    pub fold_val_f1: Vec<f64>,
    pub fold_test_f1: Vec<f64>,
    pub mean_train_f1: f64,
    pub mean_val_f1: f64,
    pub mean_test_f1: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub entries: Vec<SweepEntry>,
    /// Configurations sampled in total; entries may be fewer if stopped early.
    pub planned: usize,
}

impl Leaderboard {
    pub fn is_complete(&self) -> bool {
        self.entries.len() == self.planned
    }
}

fn key(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Ranks by mean validation macro F1, then mean training macro F1, then
/// sample index. Test scores are never consulted.
pub fn rank(entries: &mut [SweepEntry]) {
    entries.sort_by(|a, b| {
        key(b.mean_val_f1)
            .total_cmp(&key(a.mean_val_f1))
            .then(key(b.mean_train_f1).total_cmp(&key(a.mean_train_f1)))
            .then(a.index.cmp(&b.index))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn evaluate_config(dataset: &Dataset, index: usize, config: &ModelConfig, opts: &SweepOptions) -> Result<SweepEntry> {
    let exp = ExperimentOptions {
        folds: opts.folds,
        seed: opts.seed,
        stratified: opts.stratified,
        train: TrainOptions {
            epochs: opts.epochs,
            patience: opts.patience,
            learning_rate: opts.learning_rate,
            on_divergence: OnDivergence::KeepBest,
        },
        workers: 1,
    };
    let report = run_experiment(dataset, opts.selection, config, &exp)?;
    let fold_train_f1: Vec<f64> = report.folds.iter().map(|f| f.train.macro_f1).collect();
    let fold_val_f1: Vec<f64> = report.folds.iter().filter_map(|f| f.validation.as_ref().map(|v| v.macro_f1)).collect();
    let fold_test_f1: Vec<f64> = report.folds.iter().map(|f| f.test.macro_f1).collect();
    Ok(SweepEntry {
        rank: 0,
        index,
        config: config.clone(),
        mean_train_f1: mean(&fold_train_f1),
        mean_val_f1: mean(&fold_val_f1),
        mean_test_f1: mean(&fold_test_f1),
        fold_train_f1,
        fold_val_f1,
        fold_test_f1,
        diverged: report.folds.iter().any(|f| f.diverged.is_some()),
    })
}

const HEADER: [&str; 19] = [
    "rank",
    "index",
    "variant",
    "activation",
    "cnn_blocks",
    "scheme",
    "regularization",
    "lstm_layers",
    "batch_size",
    "windows",
    "lstm_units",
    "dense_units",
    "mean_train_f1",
    "mean_val_f1",
    "mean_test_f1",
    "fold_train_f1",
    "fold_val_f1",
    "fold_test_f1",
    "diverged",
];

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

fn split<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(';').map(|x| x.parse().ok()).collect()
}

pub fn leaderboard_csv(entries: &[SweepEntry]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory");
    for e in entries {
        let c = &e.config;
        w.write_record([
            e.rank.to_string(),
            e.index.to_string(),
            c.variant.to_string(),
            serde_json::to_value(c.activation).expect("enum").as_str().expect("string").to_string(),
            c.cnn_blocks.to_string(),
            c.scheme.to_string(),
            c.regularization.to_string(),
            c.lstm_layers.to_string(),
            c.batch_size.to_string(),
            c.windows.to_string(),
            c.lstm_units.to_string(),
            join(&c.dense_units),
            e.mean_train_f1.to_string(),
            e.mean_val_f1.to_string(),
            e.mean_test_f1.to_string(),
            join(&e.fold_train_f1),
            join(&e.fold_val_f1),
            join(&e.fold_test_f1),
            e.diverged.to_string(),
        ])
        .expect("in-memory");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn parse_leaderboard(text: &str) -> Result<Vec<SweepEntry>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| CoreError::Data(format!("leaderboard header: {e}")))?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return data_err("leaderboard.csv has unexpected columns");
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CoreError::Data(format!("leaderboard row {line}: {e}")))?;
        let bad = |col: &str| CoreError::Data(format!("leaderboard row {line}: bad value in column {col}"));
        let f = |j: usize| rec.get(j).unwrap_or("");
        macro_rules! p {
            ($j:expr) => {
                f($j).parse().map_err(|_| bad(HEADER[$j]))?
            };
        }
        let activation: Activation =
            serde_json::from_value(serde_json::Value::String(f(3).to_string())).map_err(|_| bad(HEADER[3]))?;
        let config = ModelConfig {
            variant: p!(2),
            activation,
            cnn_blocks: p!(4),
            scheme: p!(5),
            regularization: p!(6),
            lstm_layers: p!(7),
            batch_size: p!(8),
            windows: p!(9),
            lstm_units: p!(10),
            dense_units: split(f(11)).ok_or_else(|| bad(HEADER[11]))?,
        };
        out.push(SweepEntry {
            rank: p!(0),
            index: p!(1),
            config,
            mean_train_f1: p!(12),
            mean_val_f1: p!(13),
            mean_test_f1: p!(14),
            fold_train_f1: split(f(15)).ok_or_else(|| bad(HEADER[15]))?,
            fold_val_f1: split(f(16)).ok_or_else(|| bad(HEADER[16]))?,
            fold_test_f1: split(f(17)).ok_or_else(|| bad(HEADER[17]))?,
            diverged: p!(18),
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize, PartialEq)]
struct SweepFile {
    space: SearchSpace,
    options: SweepOptions,
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| CoreError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CoreError::io(path, e))
}

/// Scores sampled configurations by k-fold LOSO cross-validation.
///
/// With `out_dir`, the space and options go to `sweep.json` and the
/// leaderboard is rewritten to `leaderboard.csv` after every batch of
/// configurations. `resume` continues from an existing leaderboard produced
/// with identical settings; the final result equals an uninterrupted run.
pub fn run_sweep(
    dataset: &Dataset,
    space: &SearchSpace,
    opts: &SweepOptions,
    out_dir: Option<&Path>,
    resume: bool,
) -> Result<Leaderboard> {
    let configs = sample_configs(space, opts.n, opts.seed, opts.mode, &opts.base)?;
    let mut done: BTreeMap<usize, SweepEntry> = BTreeMap::new();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
        let spec_path = dir.join("sweep.json");
        let board_path = dir.join("leaderboard.csv");
        let this = SweepFile {
            space: space.clone(),
            options: opts.clone(),
        };
        if resume && spec_path.exists() {
            let text = fs::read_to_string(&spec_path).map_err(|e| CoreError::io(&spec_path, e))?;
            let prev: SweepFile =
                serde_json::from_str(&text).map_err(|e| CoreError::Data(format!("{}: {e}", spec_path.display())))?;
            // compare persisted fields only; worker count and budget may differ
            if serde_json::to_value(&prev).ok() != serde_json::to_value(&this).ok() {
                return config_err(format!("{} was written with different sweep settings; refusing to resume", spec_path.display()));
            }
            if board_path.exists() {
                let text = fs::read_to_string(&board_path).map_err(|e| CoreError::io(&board_path, e))?;
                for e in parse_leaderboard(&text)? {
                    if configs.get(e.index) != Some(&e.config) {
                        return data_err(format!("leaderboard entry {} does not match the sampled configuration", e.index));
                    }
                    done.insert(e.index, e);
                }
            }
        } else if !resume && board_path.exists() {
            return config_err(format!("{} exists; pass resume or use a fresh directory", board_path.display()));
        }
        write_atomic(&spec_path, &pretty(&this))?;
    }

    let pending: Vec<usize> = (0..configs.len()).filter(|i| !done.contains_key(i)).collect();
    let budget = opts.stop_after.unwrap_or(usize::MAX).min(pending.len());
    let chunk = effective_workers(opts.workers).max(1);
    for group in pending[..budget].chunks(chunk) {
        let results = par_map(group, opts.workers, |_, &i| evaluate_config(dataset, i, &configs[i], opts));
        for r in results {
            let e = r?;
            log::info!("config {} / {}: mean val F1 {:.3}", e.index + 1, configs.len(), e.mean_val_f1);
            done.insert(e.index, e);
        }
        if let Some(dir) = out_dir {
            let mut entries: Vec<SweepEntry> = done.values().cloned().collect();
            rank(&mut entries);
            write_atomic(&dir.join("leaderboard.csv"), &leaderboard_csv(&entries))?;
        }
    }
    let mut entries: Vec<SweepEntry> = done.into_values().collect();
    rank(&mut entries);
    Ok(Leaderboard {
        entries,
        planned: configs.len(),
    })
}
