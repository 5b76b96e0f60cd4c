//! Leave-one-subject-out protocol: splits, training loop, evaluation and
//! multi-fold experiments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use repscore_nn::optim::{AdamConfig, OptimizerState, DEFAULT_LEARNING_RATE};
use repscore_nn::rng::{derive_seed, seeded};
use repscore_nn::{NnError, SequenceBatch};

use crate::arch::{build_model, Model, ModelConfig, CLASSES};
use crate::error::{config_err, data_err, CoreError, Result};
use crate::exec::par_map;
use crate::metrics::{MeanStd, MetricsReport};
use crate::pipeline::{
    apply_alignment, dataset_max_length, fit_scaler, prepare, Dataset, Exercise, Repetition, ScalerParams,
    SensorLayout, Side, WindowedSample,
};

pub const VALIDATION_FRACTION: f64 = 0.2;
pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_PATIENCE: usize = 15;
const INFERENCE_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test_subject: String,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    /// Ratings (1..=3) absent from this fold's training set.
    pub missing_classes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub stratified: bool,
    pub folds: Vec<Fold>,
}

fn label_of(rep: &Repetition) -> Result<usize> {
    rep.label
        .map(|l| l as usize - 1)
        .ok_or_else(|| CoreError::Data(format!("repetition {} has no final label", rep.id)))
}

/// `folds` distinct test subjects drawn seeded-uniformly; each fold holds
/// out 20 % of the remaining repetitions for validation, stratified by
/// label (pooled over subjects) unless `stratified` is false, in which case
/// the same number is drawn uniformly.
pub fn make_losocv(dataset: &Dataset, folds: usize, seed: u64, stratified: bool) -> Result<SplitPlan> {
    let labels: Vec<usize> = dataset.repetitions.iter().map(label_of).collect::<Result<_>>()?;
    let mut subjects = dataset.subjects();
    if folds == 0 || folds > subjects.len() {
        return config_err(format!("{folds} folds requested but the selection has {} subjects", subjects.len()));
    }
    subjects.shuffle(&mut seeded(derive_seed(seed, 0x5eed)));
    let mut out = Vec::with_capacity(folds);
    for (k, subject) in subjects.into_iter().take(folds).enumerate() {
        let mut rng = seeded(derive_seed(seed, 1000 + k as u64));
        let (test, pool): (Vec<usize>, Vec<usize>) =
            (0..dataset.repetitions.len()).partition(|&i| dataset.repetitions[i].subject == subject);
        let mut by_class: [Vec<usize>; CLASSES] = Default::default();
        for &i in &pool {
            by_class[labels[i]].push(i);
        }
        let quota: Vec<usize> = by_class
            .iter()
            .map(|c| (c.len() as f64 * VALIDATION_FRACTION).round() as usize)
            .collect();
        let mut validation = Vec::new();
        if stratified {
            for (c, members) in by_class.iter_mut().enumerate() {
                members.shuffle(&mut rng);
                validation.extend_from_slice(&members[..quota[c]]);
            }
        } else {
            let mut shuffled = pool.clone();
            shuffled.shuffle(&mut rng);
            validation.extend_from_slice(&shuffled[..quota.iter().sum::<usize>()]);
        }
        validation.sort_unstable();
        let val_set: BTreeSet<usize> = validation.iter().copied().collect();
        let train: Vec<usize> = pool.into_iter().filter(|i| !val_set.contains(i)).collect();
        let present: BTreeSet<usize> = train.iter().map(|&i| labels[i]).collect();
        let missing_classes: Vec<u8> = (0..CLASSES).filter(|c| !present.contains(c)).map(|c| c as u8 + 1).collect();
        if !missing_classes.is_empty() {
            log::warn!("fold {k} (test subject {subject}): training set lacks ratings {missing_classes:?}");
        }
        out.push(Fold {
            test_subject: subject,
            train,
            validation,
            test,
            missing_classes,
        });
    }
    Ok(SplitPlan {
        seed,
        stratified,
        folds: out,
    })
}

/// Applies the dataset's alignment rotations to every repetition.
pub fn align_dataset(dataset: &Dataset) -> Result<Dataset> {
    if dataset.alignment.is_empty() {
        return Ok(dataset.clone());
    }
    let mut out = dataset.clone();
    out.repetitions = dataset
        .repetitions
        .iter()
        .map(|r| apply_alignment(r, &dataset.alignment))
        .collect::<Result<_>>()?;
    out.alignment.clear();
    Ok(out)
}

/// Model-ready samples of one fold.
#[derive(Debug, Clone)]
pub struct PreparedFold {
    pub scaler: ScalerParams,
    pub max_length: usize,
    pub windows: usize,
    /// Repetition ids the scaler was fitted on.
    pub scaler_fit_ids: Vec<String>,
    pub train: Vec<WindowedSample>,
    pub validation: Vec<WindowedSample>,
    pub test: Vec<WindowedSample>,
}

impl PreparedFold {
    pub fn window_len(&self) -> usize {
        self.max_length / self.windows
    }
}

/// Padded length for `windows` windows: the dataset constant when
/// recorded (rounded up to a multiple of `windows`), otherwise the longest
/// training repetition.
pub fn fold_max_length(dataset: &Dataset, train: &[usize], windows: usize) -> Result<usize> {
    match dataset.max_length {
        Some(m) => dataset_max_length([m], windows),
        None => dataset_max_length(train.iter().map(|&i| dataset.repetitions[i].true_length), windows),
    }
}

/// Fits the scaler on the fold's training repetitions and windows every
/// split. Expects an aligned dataset (see [`align_dataset`]).
pub fn prepare_fold(dataset: &Dataset, fold: &Fold, windows: usize) -> Result<PreparedFold> {
    let train_reps: Vec<&Repetition> = fold.train.iter().map(|&i| &dataset.repetitions[i]).collect();
    let scaler = fit_scaler(train_reps.iter().copied())?;
    let max_length = fold_max_length(dataset, &fold.train, windows)?;
    let prep = |idx: &[usize]| -> Result<Vec<WindowedSample>> {
        idx.iter()
            .map(|&i| prepare(&dataset.repetitions[i], &dataset.layout, &scaler, max_length, windows))
            .collect()
    };
    Ok(PreparedFold {
        scaler,
        max_length,
        windows,
        scaler_fit_ids: train_reps.iter().map(|r| r.id.clone()).collect(),
        train: prep(&fold.train)?,
        validation: prep(&fold.validation)?,
        test: prep(&fold.test)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnDivergence {
    /// Fail the run.
    Abort,
    /// Stop training and keep the best finite checkpoint.
    KeepBest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<usize>,
    pub learning_rate: f64,
    pub on_divergence: OnDivergence,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: DEFAULT_EPOCHS,
            patience: Some(DEFAULT_PATIENCE),
            learning_rate: DEFAULT_LEARNING_RATE,
            on_divergence: OnDivergence::Abort,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training-mode loss and macro F1 over the epoch's batches.
    pub train_loss: f64,
    pub train_f1: f64,
    pub val_loss: Option<f64>,
    pub val_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the best validation epoch.
    pub model: Model,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub diverged: Option<String>,
}

fn stack(samples: &[&WindowedSample]) -> Result<SequenceBatch> {
    let first = samples.first().ok_or_else(|| CoreError::Data("empty batch".into()))?;
    Ok(SequenceBatch::stack(
        samples.iter().map(|s| (s.data.as_slice(), s.mask.as_slice())),
        first.rows,
        first.window_len,
    )?)
}

fn labels_of(samples: &[WindowedSample]) -> Result<Vec<usize>> {
    samples
        .iter()
        .map(|s| s.label.ok_or_else(|| CoreError::Data("sample without label".into())))
        .collect()
}

/// Inference-mode class probabilities for `samples`.
pub fn predict(model: &Model, samples: &[WindowedSample]) -> Result<Vec<[f64; CLASSES]>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(INFERENCE_BATCH) {
        let refs: Vec<&WindowedSample> = chunk.iter().collect();
        out.extend(model.forward_classify(&stack(&refs)?)?);
    }
    Ok(out)
}

pub fn evaluate(model: &Model, samples: &[WindowedSample]) -> Result<MetricsReport> {
    if samples.is_empty() {
        return data_err("cannot evaluate an empty set");
    }
    MetricsReport::from_probabilities(&labels_of(samples)?, &predict(model, samples)?)
}

/// Minibatch Adam training with per-epoch shuffling, keeping the weights of
/// the best validation macro-F1 epoch (the last epoch when there is no
/// validation set). Deterministic for a given `seed`.
pub fn train(
    config: &ModelConfig,
    layout: &SensorLayout,
    fold: &PreparedFold,
    options: &TrainOptions,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.windows != fold.windows {
        return config_err(format!("config has {} windows, fold prepared with {}", config.windows, fold.windows));
    }
    if fold.train.is_empty() {
        return data_err("training set is empty");
    }
    if !(options.learning_rate >= 0.0 && options.learning_rate.is_finite()) {
        return config_err(format!("learning rate {} must be finite and >= 0", options.learning_rate));
    }
    let train_labels = labels_of(&fold.train)?;
    let mut model = build_model(config, layout, fold.window_len(), derive_seed(seed, 1))?;
    let mut opt = OptimizerState::new(
        AdamConfig {
            learning_rate: options.learning_rate,
            ..AdamConfig::default()
        },
        model.network.params(),
    );
    let mut best = (model.clone(), f64::NEG_INFINITY, 0usize);
    let mut history = Vec::new();
    let mut diverged = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..fold.train.len()).collect();

    'epochs: for epoch in 1..=options.epochs {
        order.shuffle(&mut seeded(derive_seed(seed, 1_000_000 + epoch as u64)));
        let mut loss_sum = 0.0;
        let mut truth = Vec::with_capacity(order.len());
        let mut preds = Vec::with_capacity(order.len());
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let refs: Vec<&WindowedSample> = chunk.iter().map(|&i| &fold.train[i]).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_labels[i]).collect();
            let batch = stack(&refs)?;
            let dropout_seed = derive_seed(seed, ((epoch as u64) << 32) | b as u64);
            match model.network.train_step(&batch, &labels, &mut opt, dropout_seed) {
                Ok(step) => {
                    loss_sum += step.loss * chunk.len() as f64;
                    truth.extend_from_slice(&labels);
                    preds.extend(step.probs.chunks(CLASSES).map(|p| crate::metrics::argmax(&[p[0], p[1], p[2]])));
                }
                Err(NnError::NonFinite(msg)) => {
                    let msg = format!("epoch {epoch}, batch {b}: {msg}");
                    match options.on_divergence {
                        OnDivergence::Abort => return Err(CoreError::Numeric(msg)),
                        OnDivergence::KeepBest => {
                            log::warn!("training diverged ({msg}); keeping epoch {} weights", best.2);
                            diverged = Some(msg);
                            break 'epochs;
                        }
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
        let train_f1 = MetricsReport::from_predictions(&truth, &preds, None)?.macro_f1;
        let (val_loss, val_f1) = if fold.validation.is_empty() {
            (None, None)
        } else {
            let r = evaluate(&model, &fold.validation)?;
            (r.loss, Some(r.macro_f1))
        };
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_f1,
            val_loss,
            val_f1,
        });
        log::debug!("epoch {epoch}: train loss {:.4} f1 {train_f1:.3}, val f1 {val_f1:?}", loss_sum / order.len() as f64);
        // without validation data every epoch is an improvement, i.e. the
        // last epoch is kept
        let score = val_f1.unwrap_or(epoch as f64);
        if score > best.1 {
            best = (model.clone(), score, epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if options.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best.0,
        best_epoch: best.2,
        history,
        diverged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Selection {
    #[serde(rename = "DS")]
    Ds,
    #[serde(rename = "TSP")]
    Tsp,
    #[serde(rename = "HS-left")]
    HsLeft,
    #[serde(rename = "HS-right")]
    HsRight,
    #[serde(rename = "HS-combined")]
    HsCombined,
    #[serde(rename = "IL-left")]
    IlLeft,
    #[serde(rename = "IL-right")]
    IlRight,
    #[serde(rename = "IL-combined")]
    IlCombined,
}

impl Selection {
    pub const ALL: [Selection; 8] = [
        Selection::Ds,
        Selection::Tsp,
        Selection::HsLeft,
        Selection::HsRight,
        Selection::HsCombined,
        Selection::IlLeft,
        Selection::IlRight,
        Selection::IlCombined,
    ];

    pub fn matches(self, rep: &Repetition) -> bool {
        use Selection::*;
        match self {
            Ds => rep.exercise == Exercise::DS,
            Tsp => rep.exercise == Exercise::TSP,
            HsLeft => rep.exercise == Exercise::HS && rep.side == Side::Left,
            HsRight => rep.exercise == Exercise::HS && rep.side == Side::Right,
            HsCombined => rep.exercise == Exercise::HS,
            IlLeft => rep.exercise == Exercise::IL && rep.side == Side::Left,
            IlRight => rep.exercise == Exercise::IL && rep.side == Side::Right,
            IlCombined => rep.exercise == Exercise::IL,
        }
    }

    pub fn apply(self, dataset: &Dataset) -> Result<Dataset> {
        let mut d = dataset.clone();
        d.repetitions.retain(|r| self.matches(r));
        if d.repetitions.is_empty() {
            return data_err(format!("selection {self} matches no repetitions"));
        }
        let ids: BTreeSet<&str> = d.repetitions.iter().map(|r| r.id.as_str()).collect();
        d.ratings = dataset.ratings.iter().filter(|r| ids.contains(r.repetition_id.as_str())).cloned().collect();
        Ok(d)
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("unit enum");
        f.write_str(v.as_str().expect("string"))
    }
}

impl FromStr for Selection {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        Selection::ALL
            .into_iter()
            .find(|x| x.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<String> = Selection::ALL.iter().map(|x| x.to_string()).collect();
                CoreError::Config(format!("unknown dataset selection '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub folds: usize,
    pub seed: u64,
    pub stratified: bool,
    pub train: TrainOptions,
    /// Parallel fold workers; 0 = all cores, 1 = sequential.
    #[serde(skip)]
    pub workers: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            folds: 5,
            seed: 0,
            stratified: true,
            train: TrainOptions::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_subject: String,
    pub best_epoch: usize,
    pub train: MetricsReport,
    pub validation: Option<MetricsReport>,
    pub test: MetricsReport,
    pub history: Vec<EpochRecord>,
    pub diverged: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub train: MeanStd,
    pub validation: MeanStd,
    pub test: MeanStd,
}

impl Summary {
    pub fn of(folds: &[FoldResult]) -> Self {
        let col = |f: &dyn Fn(&FoldResult) -> Option<f64>| MeanStd::of(&folds.iter().filter_map(f).collect::<Vec<_>>());
        Summary {
            train: col(&|r| Some(r.train.macro_f1)),
            validation: col(&|r| r.validation.as_ref().map(|v| v.macro_f1)),
            test: col(&|r| Some(r.test.macro_f1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub selection: String,
    pub config: ModelConfig,
    pub options: ExperimentOptions,
    pub plan: SplitPlan,
    pub folds: Vec<FoldResult>,
    pub summary: Summary,
}

/// Trains and evaluates fold `k` of `plan` on an aligned dataset.
pub fn run_fold(
    dataset: &Dataset,
    plan: &SplitPlan,
    k: usize,
    config: &ModelConfig,
    options: &ExperimentOptions,
) -> Result<(FoldResult, TrainOutcome, PreparedFold)> {
    let fold = plan
        .folds
        .get(k)
        .ok_or_else(|| CoreError::Config(format!("fold {k} out of range (plan has {})", plan.folds.len())))?;
    let prepared = prepare_fold(dataset, fold, config.windows)?;
    let outcome = train(config, &dataset.layout, &prepared, &options.train, derive_seed(options.seed, 100 + k as u64))
        .map_err(|e| match e {
            CoreError::Numeric(m) => CoreError::Numeric(format!("fold {k} (test subject {}): {m}", fold.test_subject)),
            other => other,
        })?;
    let result = FoldResult {
        fold: k,
        test_subject: fold.test_subject.clone(),
        best_epoch: outcome.best_epoch,
        train: evaluate(&outcome.model, &prepared.train)?,
        validation: if prepared.validation.is_empty() {
            None
        } else {
            Some(evaluate(&outcome.model, &prepared.validation)?)
        },
        test: evaluate(&outcome.model, &prepared.test)?,
        history: outcome.history.clone(),
        diverged: outcome.diverged.clone(),
    };
    Ok((result, outcome, prepared))
}

/// k-fold LOSO cross-validation of one configuration on a labeled dataset
/// (optionally restricted to a selection). Folds run in parallel when
/// `options.workers != 1`; results do not depend on the worker count.
pub fn run_experiment(
    dataset: &Dataset,
    selection: Option<Selection>,
    config: &ModelConfig,
    options: &ExperimentOptions,
) -> Result<ExperimentReport> {
    config.validate()?;
    let selected = match selection {
        Some(s) => s.apply(dataset)?,
        None => dataset.clone(),
    };
    if selected.repetitions.is_empty() {
        return data_err("dataset has no repetitions");
    }
    let aligned = align_dataset(&selected)?;
    let plan = make_losocv(&aligned, options.folds, options.seed, options.stratified)?;
    let ks: Vec<usize> = (0..plan.folds.len()).collect();
    let results = par_map(&ks, options.workers, |_, &k| {
        run_fold(&aligned, &plan, k, config, options).map(|(r, _, _)| r)
    });
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        selection: selection.map_or_else(|| "all".to_string(), |s| s.to_string()),
        config: config.clone(),
        options: *options,
        summary: Summary::of(&folds),
        plan,
        folds,
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CoreError::io(path, e))
}

/// Writes `config.json`, `split_plan.json`, `history.csv`, `folds.csv`,
/// `summary.csv` and the full `report.json` into `dir`.
pub fn write_experiment(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    write_file(&dir.join("config.json"), pretty(&report.config))?;
    write_file(&dir.join("split_plan.json"), pretty(&report.plan))?;
    write_file(&dir.join("report.json"), pretty(report))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["fold", "epoch", "train_loss", "train_f1", "val_loss", "val_f1"]).expect("in-memory");
    for f in &report.folds {
        for e in &f.history {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                f.fold.to_string(),
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.train_f1.to_string(),
                opt(e.val_loss),
                opt(e.val_f1),
            ])
            .expect("in-memory");
        }
    }
    write_file(&dir.join("history.csv"), w.into_inner().expect("flush"))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["fold", "test_subject", "best_epoch", "train_f1", "val_f1", "test_f1", "diverged"]).expect("in-memory");
    for f in &report.folds {
        w.write_record([
            f.fold.to_string(),
            f.test_subject.clone(),
            f.best_epoch.to_string(),
            f.train.macro_f1.to_string(),
            f.validation.as_ref().map(|v| v.macro_f1.to_string()).unwrap_or_default(),
            f.test.macro_f1.to_string(),
            f.diverged.clone().unwrap_or_default(),
        ])
        .expect("in-memory");
    }
    write_file(&dir.join("folds.csv"), w.into_inner().expect("flush"))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["split", "mean_macro_f1", "std_macro_f1"]).expect("in-memory");
    for (name, ms) in [
        ("train", report.summary.train),
        ("validation", report.summary.validation),
        ("test", report.summary.test),
    ] {
        w.write_record([name.to_string(), ms.mean.to_string(), ms.std.to_string()]).expect("in-memory");
    }
    write_file(&dir.join("summary.csv"), w.into_inner().expect("flush"))
}

pub(crate) fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

/// Table-style text summary (train / validation / test macro F1,
/// mean ± std) of several experiment reports.
pub fn render_table(reports: &[ExperimentReport]) -> String {
    let mut rows: BTreeMap<String, Vec<&ExperimentReport>> = BTreeMap::new();
    for r in reports {
        rows.entry(r.selection.clone()).or_default().push(r);
    }
    let mut out = format!("{:<14} {:<16} {:>6} {:>13} {:>13} {:>13}\n", "dataset", "variant", "folds", "train", "validation", "test");
    for (sel, rs) in rows {
        for r in rs {
            out.push_str(&format!(
                "{:<14} {:<16} {:>6} {:>13} {:>13} {:>13}\n",
                sel,
                format!("{}/{}b", r.config.variant, r.config.cnn_blocks),
                r.folds.len(),
                r.summary.train.to_string(),
                r.summary.validation.to_string(),
                r.summary.test.to_string()
            ));
        }
    }
    out
}
