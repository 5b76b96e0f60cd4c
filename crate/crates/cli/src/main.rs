mod run;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use repscore_core::arch::{Model, ModelConfig, Regularization, Scheme, Variant};
use repscore_core::harness::{
    align_dataset, evaluate, make_losocv, prepare_fold, render_table, run_experiment, run_fold, write_experiment,
    ExperimentOptions, ExperimentReport, FoldResult, OnDivergence, Selection, SplitPlan, TrainOptions,
};
use repscore_core::labels::{build_labeled_dataset, Category, Metric};
use repscore_core::metrics::MetricsReport;
use repscore_core::pipeline::{load_dataset, save_dataset, Dataset, ScalerParams};
use repscore_core::sweep::{parse_leaderboard, run_sweep, SamplingMode, SearchSpace, SweepEntry, SweepOptions};
use repscore_core::synthgen::{generate, preset, GeneratorSpec};
use repscore_nn::{Activation, Checkpoint};

use run::{exit_code, hash_path, usage, RunDir};

const CHECKPOINT_FILE: &str = "model.ckpt";

/// Scoring exercise repetitions from multi-IMU recordings with CNN-LSTM
/// models: synthetic data, labels, leave-one-subject-out experiments and
/// hyperparameter sweeps.
#[derive(Parser)]
#[command(name = "repscore", version)]
struct Cli {
    /// Directory that holds run directories.
    #[arg(long, global = true, env = "REPSCORE_RUNS_DIR", default_value = "runs")]
    runs_dir: PathBuf,
    /// Name of the run directory (default: <command>-<time>-<pid>).
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Check that a dataset directory loads and is consistent.
    Validate(DataArg),
    /// Aggregate ratings into final labels and report agreement.
    Labels(LabelsArgs),
    /// Train and evaluate one LOSO fold, saving the model.
    Train(TrainArgs),
    /// Evaluate a model saved by `train` on one split of its fold.
    Eval(EvalArgs),
    /// k-fold LOSO cross-validation of one configuration.
    Experiment(ExperimentArgs),
    /// Seeded random search over the hyperparameter space.
    Sweep(SweepArgs),
    /// Summarise experiment and sweep run directories as text tables.
    Report(ReportArgs),
}

fn serde_str<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unrecognised value '{s}'"))
}

#[derive(Args)]
struct DataArg {
    /// Dataset directory (manifest.json, reps/, ratings.csv).
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Preset: default, learnable, confounded, hs-left-skewed, tiny.
    #[arg(long, default_value = "default")]
    preset: String,
    /// Generator spec JSON; replaces the preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: a new run directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    subjects: Option<usize>,
    /// Repetitions per subject, exercise and side.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    imus: Option<usize>,
    #[arg(long)]
    class_effect: Option<f64>,
    #[arg(long)]
    confound: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    /// Per-rater probability of an adjacent score.
    #[arg(long)]
    adjacent: Option<f64>,
    /// Per-rater probability of a score two steps away.
    #[arg(long)]
    two_step: Option<f64>,
    /// Cycle ratings 1/2/3 within each cell instead of sampling priors.
    #[arg(long)]
    balanced: bool,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct LabelsArgs {
    #[command(flatten)]
    data: DataArg,
    /// Distance metric for Krippendorff's alpha.
    #[arg(long, default_value = "ordinal", value_parser = serde_str::<Metric>)]
    metric: Metric,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model configuration JSON (default: the best configuration).
    #[arg(long)]
    config: Option<PathBuf>,
    /// baseline, imu_centric or channel_centric.
    #[arg(long, value_parser = serde_str::<Variant>)]
    variant: Option<Variant>,
    #[arg(long)]
    cnn_blocks: Option<usize>,
    /// inc_filters_fixed_kernel or inc_filters_dec_kernel.
    #[arg(long, value_parser = serde_str::<Scheme>)]
    scheme: Option<Scheme>,
    /// dropout_0.2 or batchnorm.
    #[arg(long, value_parser = serde_str::<Regularization>)]
    regularization: Option<Regularization>,
    #[arg(long)]
    lstm_layers: Option<usize>,
    /// relu, elu or lrelu.
    #[arg(long, value_parser = serde_str::<Activation>)]
    activation: Option<Activation>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Windows per repetition (default: the dataset's).
    #[arg(long)]
    windows: Option<usize>,
    #[arg(long)]
    lstm_units: Option<usize>,
    /// Hidden dense widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    dense_units: Option<Vec<usize>>,
}

impl ModelArgs {
    fn resolve(&self, dataset: &Dataset) -> Result<ModelConfig> {
        let mut c = match &self.config {
            Some(p) => read_json::<ModelConfig>(p)?,
            None => ModelConfig {
                windows: dataset.windows,
                ..ModelConfig::best()
            },
        };
        macro_rules! over {
            ($($f:ident),*) => {$( if let Some(v) = &self.$f { c.$f = v.clone(); } )*};
        }
        over!(variant, cnn_blocks, scheme, regularization, lstm_layers, activation, batch_size, windows, lstm_units, dense_units);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Clone)]
struct TrainingArgs {
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = repscore_nn::optim::DEFAULT_LEARNING_RATE)]
    lr: f64,
    /// Early-stopping patience in epochs; 0 disables it.
    #[arg(long, default_value_t = 15)]
    patience: usize,
    /// Keep the best weights instead of failing when the loss diverges.
    #[arg(long)]
    keep_best_on_divergence: bool,
}

impl TrainingArgs {
    fn options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            patience: (self.patience > 0).then_some(self.patience),
            learning_rate: self.lr,
            on_divergence: if self.keep_best_on_divergence {
                OnDivergence::KeepBest
            } else {
                OnDivergence::Abort
            },
        }
    }
}

#[derive(Args)]
struct SplitArgs {
    /// Exercise selection: DS, TSP, HS-left, HS-right, HS-combined,
    /// IL-left, IL-right, IL-combined (default: all repetitions).
    #[arg(long)]
    dataset: Option<Selection>,
    /// Number of LOSO folds (test subjects).
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw validation repetitions without label stratification.
    #[arg(long)]
    unstratified: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArg,
    #[command(flatten)]
    split: SplitArgs,
    /// Fold index within the split plan.
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArg,
    /// Run directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// train, validation or test.
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArg,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    training: TrainingArgs,
    /// Parallel fold workers (0 = all cores).
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArg,
    /// Configurations to sample.
    #[arg(long, default_value_t = repscore_core::sweep::DEFAULT_SWEEP_SIZE)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = repscore_core::sweep::DEFAULT_SWEEP_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = repscore_nn::optim::DEFAULT_LEARNING_RATE)]
    lr: f64,
    /// Early-stopping patience; 0 disables it.
    #[arg(long, default_value_t = 0)]
    patience: usize,
    /// Exercise selection.
    #[arg(long, default_value = "DS")]
    dataset: Selection,
    /// Sample distinct combinations instead of independent draws.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long)]
    unstratified: bool,
    /// Continue the sweep in the run directory named by --run-id.
    #[arg(long)]
    resume: bool,
    /// Parallel configuration workers (0 = all cores).
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Fields not searched over (widths, windows) come from these.
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment or sweep run directories.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Leaderboard rows to show per sweep.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| repscore_core::CoreError::Data(format!("{}: {e}", path.display())).into())
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

fn load(data: &DataArg) -> Result<Dataset> {
    load_dataset(&data.data).with_context(|| format!("loading dataset {}", data.data.display()))
}

fn load_labeled(data: &DataArg) -> Result<Dataset> {
    let ds = load(data)?;
    let (labeled, report) = build_labeled_dataset(&ds)?;
    if !report.excluded.is_empty() {
        log::info!("{} of {} repetitions excluded during labeling", report.excluded.len(), report.total);
    }
    Ok(labeled)
}

/// Runs `body` inside a fresh run directory and records the outcome.
fn in_run(cli: &Cli, command: &str, reuse: bool, body: impl FnOnce(&mut RunDir) -> Result<()>) -> Result<()> {
    let mut run = RunDir::create(&cli.runs_dir, cli.run_id.as_deref(), command, reuse)?;
    let outcome = body(&mut run);
    let path = run.path.clone();
    run.finish(&outcome)?;
    if outcome.is_ok() {
        println!("run directory: {}", path.display());
    }
    outcome
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let mut spec: GeneratorSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => preset(&a.preset)?,
    };
    spec.seed = a.seed;
    macro_rules! over {
        ($($arg:ident => $field:ident),*) => {$( if let Some(v) = a.$arg { spec.$field = v; } )*};
    }
    over!(subjects => subjects, reps => reps_per_cell, imus => imus, class_effect => class_effect,
          confound => confound, noise => noise);
    if let Some(v) = a.adjacent {
        spec.raters.adjacent = v;
    }
    if let Some(v) = a.two_step {
        spec.raters.two_step = v;
    }
    spec.balanced |= a.balanced;
    spec.validate()?;
    let mut run = match &a.out {
        Some(dir) => RunDir::at(dir.clone(), "synth", false)?,
        None => RunDir::create(&cli.runs_dir, cli.run_id.as_deref(), "synth", false)?,
    };
    run.set_config(&spec)?;
    run.seed("generator", spec.seed);
    let outcome = (|| -> Result<()> {
        let g = generate(&spec, a.workers.unwrap_or(1))?;
        save_dataset(&g.dataset, &run.path)?;
        write_json(&run.file("synthgen.json"), &spec)?;
        write_json(&run.file("ground_truth.json"), &g.truth)?;
        println!(
            "{} repetitions, {} subjects, {} ratings",
            g.dataset.repetitions.len(),
            g.dataset.subjects().len(),
            g.dataset.ratings.len()
        );
        println!("dataset hash: {}", hash_path(&run.path)?);
        Ok(())
    })();
    let path = run.path.clone();
    run.finish(&outcome)?;
    if outcome.is_ok() {
        println!("dataset directory: {}", path.display());
    }
    outcome
}

fn validate(a: &DataArg) -> Result<()> {
    let ds = load(a)?;
    let rated: std::collections::BTreeSet<&str> = ds.ratings.iter().map(|r| r.repetition_id.as_str()).collect();
    let ids: std::collections::BTreeSet<&str> = ds.repetitions.iter().map(|r| r.id.as_str()).collect();
    let orphans = rated.difference(&ids).count();
    println!("ok: {} repetitions, {} subjects, {} IMUs, {} ratings", ds.repetitions.len(), ds.subjects().len(), ds.layout.imus.len(), ds.ratings.len());
    println!("unrated repetitions: {}", ids.difference(&rated).count());
    if orphans > 0 {
        println!("warning: {orphans} rated ids have no repetition");
    }
    println!("dataset hash: {}", hash_path(&a.data)?);
    Ok(())
}

fn percent(share: f64) -> String {
    format!("{:.0}%", 100.0 * share)
}

fn labels(cli: &Cli, a: &LabelsArgs) -> Result<()> {
    in_run(cli, "labels", false, |run| {
        run.input(&a.data.data)?;
        run.set_config(&serde_json::json!({ "metric": a.metric }))?;
        let ds = load(&a.data)?;
        let all = repscore_core::labels::krippendorff_alpha(&ds.ratings, a.metric).ok();
        let (_, report) = build_labeled_dataset(&ds)?;
        let retained_ids: std::collections::BTreeSet<&str> =
            report.agreement.iter().filter(|(_, r)| r.final_label.is_some()).map(|(id, _)| id.as_str()).collect();
        let retained: Vec<_> = ds.ratings.iter().filter(|r| retained_ids.contains(r.repetition_id.as_str())).cloned().collect();
        let kept = repscore_core::labels::krippendorff_alpha(&retained, a.metric).ok();
        let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"));
        println!("repetitions: {} (retained {}, excluded {})", report.total, report.retained, report.excluded.len());
        println!("alpha ({:?}, all ratings): {}", a.metric, show(all));
        println!("alpha ({:?}, retained): {}", a.metric, show(kept));
        let shares = report.category_shares();
        for c in Category::ALL {
            println!("{}: {}", c.name(), percent(shares[&c]));
        }
        for (group, h) in &report.histograms {
            println!("{group}: ratings 1/2/3 = {}/{}/{}", h[0], h[1], h[2]);
        }
        let mut w = String::from("repetition_id,final_label,category\n");
        for (id, r) in &report.agreement {
            w.push_str(&format!("{id},{},{}\n", r.final_label.map(|l| l.to_string()).unwrap_or_default(), r.category.name()));
        }
        fs::write(run.file("labels.csv"), w)?;
        write_json(&run.file("label_report.json"), &report)
    })
}

fn experiment_options(split: &SplitArgs, training: &TrainingArgs, workers: usize) -> ExperimentOptions {
    ExperimentOptions {
        folds: split.folds,
        seed: split.seed,
        stratified: !split.unstratified,
        train: training.options(),
        workers,
    }
}

#[derive(Serialize, Deserialize)]
struct TrainMeta {
    config: ModelConfig,
    selection: Option<Selection>,
    fold: usize,
    test_subject: String,
    scaler: ScalerParams,
    max_length: usize,
    options: ExperimentOptions,
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    in_run(cli, "train", false, |run| {
        run.input(&a.data.data)?;
        let ds = load_labeled(&a.data)?;
        let config = a.model.resolve(&ds)?;
        let options = experiment_options(&a.split, &a.training, 1);
        run.set_config(&serde_json::json!({ "model": config, "options": options, "selection": a.split.dataset, "fold": a.fold }))?;
        run.seed("split", options.seed);
        let selected = match a.split.dataset {
            Some(s) => s.apply(&ds)?,
            None => ds,
        };
        let aligned = align_dataset(&selected)?;
        let plan = make_losocv(&aligned, options.folds, options.seed, options.stratified)?;
        if a.fold >= plan.folds.len() {
            return Err(usage(format!("--fold {} out of range for {} folds", a.fold, plan.folds.len())));
        }
        let (result, outcome, prepared) = run_fold(&aligned, &plan, a.fold, &config, &options)?;
        let meta = TrainMeta {
            config: config.clone(),
            selection: a.split.dataset,
            fold: a.fold,
            test_subject: result.test_subject.clone(),
            scaler: prepared.scaler,
            max_length: prepared.max_length,
            options,
        };
        Checkpoint::capture(&outcome.model.network, None, serde_json::to_value(&meta)?).save(&run.file(CHECKPOINT_FILE))?;
        write_json(&run.file("split_plan.json"), &plan)?;
        write_json(&run.file("fold.json"), &result)?;
        print_fold(&result);
        Ok(())
    })
}

fn print_fold(r: &FoldResult) {
    let val = r.validation.as_ref().map_or_else(|| "n/a".to_string(), |v| format!("{:.3}", v.macro_f1));
    println!(
        "fold {} (test subject {}): best epoch {}, macro F1 train {:.3} / validation {val} / test {:.3}",
        r.fold, r.test_subject, r.best_epoch, r.train.macro_f1, r.test.macro_f1
    );
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    in_run(cli, "eval", false, |run| {
        run.input(&a.data.data)?;
        run.input(&a.model.join(CHECKPOINT_FILE))?;
        let ckpt = Checkpoint::load(&a.model.join(CHECKPOINT_FILE))?;
        let meta: TrainMeta = serde_json::from_value(ckpt.meta.clone())
            .map_err(|e| repscore_core::CoreError::Data(format!("checkpoint metadata: {e}")))?;
        let plan: SplitPlan = read_json(&a.model.join("split_plan.json"))?;
        run.set_config(&serde_json::json!({ "model_run": a.model, "split": a.split, "fold": meta.fold }))?;
        let ds = load_labeled(&a.data)?;
        let selected = match meta.selection {
            Some(s) => s.apply(&ds)?,
            None => ds,
        };
        let aligned = align_dataset(&selected)?;
        let fold = &plan.folds[meta.fold];
        let prepared = prepare_fold(&aligned, fold, meta.config.windows)?;
        if prepared.scaler != meta.scaler || prepared.max_length != meta.max_length {
            return Err(repscore_core::CoreError::Data(
                "dataset differs from the one the model was trained on (scaler or padded length changed)".into(),
            )
            .into());
        }
        let model = Model {
            config: meta.config.clone(),
            network: ckpt.restore()?,
        };
        let samples = match a.split.as_str() {
            "train" => &prepared.train,
            "validation" => &prepared.validation,
            "test" => &prepared.test,
            other => return Err(usage(format!("unknown split '{other}' (train, validation, test)"))),
        };
        let report: MetricsReport = evaluate(&model, samples)?;
        println!("{} split of fold {} ({} repetitions): macro F1 {:.3}", a.split, meta.fold, samples.len(), report.macro_f1);
        for (k, m) in report.per_class.iter().enumerate() {
            println!("  rating {}: precision {:.3} recall {:.3} F1 {:.3} (n={})", k + 1, m.precision, m.recall, m.f1, m.support);
        }
        write_json(&run.file("metrics.json"), &report)
    })
}

fn experiment(cli: &Cli, a: &ExperimentArgs) -> Result<()> {
    in_run(cli, "experiment", false, |run| {
        run.input(&a.data.data)?;
        let ds = load_labeled(&a.data)?;
        let config = a.model.resolve(&ds)?;
        let options = experiment_options(&a.split, &a.training, a.workers);
        run.set_config(&serde_json::json!({ "model": config, "options": options, "selection": a.split.dataset }))?;
        run.seed("split", options.seed);
        let report = run_experiment(&ds, a.split.dataset, &config, &options)?;
        write_experiment(&report, &run.path)?;
        for f in &report.folds {
            print_fold(f);
        }
        print!("{}", render_table(std::slice::from_ref(&report)));
        Ok(())
    })
}

fn sweep(cli: &Cli, a: &SweepArgs) -> Result<()> {
    if a.resume && cli.run_id.is_none() {
        return Err(usage("--resume needs --run-id naming the sweep to continue"));
    }
    in_run(cli, "sweep", a.resume, |run| {
        run.input(&a.data.data)?;
        let ds = load_labeled(&a.data)?;
        let opts = SweepOptions {
            n: a.n,
            folds: a.folds,
            epochs: a.epochs,
            seed: a.seed,
            mode: if a.exhaustive { SamplingMode::Exhaustive } else { SamplingMode::Random },
            selection: Some(a.dataset),
            base: a.model.resolve(&ds)?,
            learning_rate: a.lr,
            patience: (a.patience > 0).then_some(a.patience),
            stratified: !a.unstratified,
            workers: a.workers,
            stop_after: None,
        };
        run.set_config(&opts)?;
        run.seed("sweep", a.seed);
        let board = run_sweep(&ds, &SearchSpace::default(), &opts, Some(&run.path), a.resume)?;
        print!("{}", render_leaderboard(&board.entries, 10));
        Ok(())
    })
}

fn render_leaderboard(entries: &[SweepEntry], top: usize) -> String {
    let mut out = format!(
        "{:>4} {:>5} {:<6} {:>6} {:<24} {:<12} {:>4} {:>5} {:>6} {:>6} {:>6}\n",
        "rank", "index", "act", "blocks", "scheme", "reg", "lstm", "batch", "train", "val", "test"
    );
    for e in entries.iter().take(top) {
        let c = &e.config;
        out.push_str(&format!(
            "{:>4} {:>5} {:<6} {:>6} {:<24} {:<12} {:>4} {:>5} {:>6.3} {:>6.3} {:>6.3}\n",
            e.rank,
            e.index,
            serde_json::to_value(c.activation).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
            c.cnn_blocks,
            c.scheme.to_string(),
            c.regularization.to_string(),
            c.lstm_layers,
            c.batch_size,
            e.mean_train_f1,
            e.mean_val_f1,
            e.mean_test_f1
        ));
    }
    out
}

fn report(a: &ReportArgs) -> Result<()> {
    let mut experiments: Vec<ExperimentReport> = Vec::new();
    for dir in &a.runs {
        let rep = dir.join("report.json");
        let board = dir.join("leaderboard.csv");
        if rep.is_file() {
            experiments.push(read_json(&rep)?);
        } else if board.is_file() {
            let text = fs::read_to_string(&board).with_context(|| format!("reading {}", board.display()))?;
            let entries = parse_leaderboard(&text)?;
            println!("sweep {} ({} configurations)", dir.display(), entries.len());
            print!("{}", render_leaderboard(&entries, a.top));
            println!();
        } else {
            return Err(repscore_core::CoreError::Data(format!("{} has neither report.json nor leaderboard.csv", dir.display())).into());
        }
    }
    if !experiments.is_empty() {
        print!("{}", render_table(&experiments));
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Validate(a) => validate(a),
        Command::Labels(a) => labels(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Experiment(a) => experiment(cli, a),
        Command::Sweep(a) => sweep(cli, a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
