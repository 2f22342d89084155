//! Command-line front end for the whitened-input residual MLP: training,
//! evaluation, prediction, uncertainty reports, cross-validation, ablation
//! sweeps, hyperparameter search, parameter counting, and synthetic data.
//!
//! Every subcommand prints its resolved settings as `key = value` lines
//! before doing any work. Usage problems (unknown flags or commands,
//! malformed config files, out-of-range hyperparameters) exit with code 2;
//! runtime failures (missing files, divergence) exit with code 1.

mod report;
mod settings;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icmlp::data::{self, Dataset};
use icmlp::model::standard_variants;
use icmlp::rng::{derive_seed, Rng};
use icmlp::train::{self, METRIC_NAMES};
use icmlp::uncertainty::{mc_dropout_predict, rank_by_entropy, RankOrder};
use icmlp::{build_model, IcMlpModel, ModelMode};

use settings::{print_config, ConfigArgs};

/// Seed stream for the train command's validation split; the library keeps
/// streams 1 through 3 for folds, cross-validation runs, and search.
const SEED_STREAM_VAL_SPLIT: u64 = 4;

/// Rows per forward pass when predicting, to bound the working set.
const PREDICT_CHUNK: usize = 256;

#[derive(Parser)]
#[command(
    name = "icmlp",
    version,
    about = "Train and analyze a whitened-input residual MLP on labeled CSV data",
    arg_required_else_help = true
)]
struct Cli {
    /// Worker threads for cross-validation, ablation, and search runs.
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a CSV dataset with an internal validation split.
    Train(TrainArgs),
    /// Report loss and accuracy of a saved model on a dataset.
    Eval(EvalArgs),
    /// Write per-sample class predictions for a dataset.
    Predict(PredictArgs),
    /// Monte-Carlo-dropout predictive uncertainty report.
    Uncertainty(UncertaintyArgs),
    /// Repeated k-fold cross-validation of one configuration.
    Crossval(CrossvalArgs),
    /// Cross-validate the five standard structural ablation variants.
    Ablate(AblateArgs),
    /// Random hyperparameter search against a holdout split.
    Search(SearchArgs),
    /// Print the trainable parameter count of a configuration.
    CountParams(CountParamsArgs),
    /// Write a seeded synthetic classification dataset.
    GenSynthetic(GenSyntheticArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training data CSV.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,

    /// Where to save the best-epoch model.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    /// Fraction of rows held out for validation, in (0, 1).
    #[arg(long, default_value_t = 0.1, value_name = "F")]
    val_fraction: f64,

    /// Optional per-epoch metrics CSV.
    #[arg(long, value_name = "PATH")]
    history: Option<PathBuf>,

    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Evaluation data CSV.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,

    /// Saved model file.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Input data CSV.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,

    /// Saved model file.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,

    /// Predictions CSV to write.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
struct UncertaintyArgs {
    /// Input data CSV.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,

    /// Saved model file.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,

    /// Uncertainty report CSV to write.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    /// Stochastic forward passes to average.
    #[arg(long, default_value_t = 50, value_name = "N")]
    passes: usize,

    /// Seed for the dropout masks of the passes.
    #[arg(long, default_value_t = 0, value_name = "N")]
    seed: u64,

    /// Also print the sample indices with the most extreme entropies.
    #[arg(long, value_name = "N")]
    top: Option<usize>,

    /// Rank by highest entropy instead of lowest.
    #[arg(long)]
    highest: bool,

    /// Run even if the model has no stochastic dropout to sample.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct CrossvalArgs {
    /// Data CSV.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,

    /// Number of folds (at least 2).
    #[arg(long, default_value_t = 5, value_name = "N")]
    k: usize,

    /// Independent reshuffled repetitions of the k folds.
    #[arg(long, default_value_t = 5, value_name = "N")]
    repeats: usize,

    /// Per-run metrics CSV.
    #[arg(long, value_name = "PATH")]
    runs_out: Option<PathBuf>,

    /// Mean/std summary CSV.
    #[arg(long, value_name = "PATH")]
    aggregate_out: Option<PathBuf>,

    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct AblateArgs {
    /// Data CSV.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,

    /// Number of folds (at least 2).
    #[arg(long, default_value_t = 5, value_name = "N")]
    k: usize,

    /// Independent reshuffled repetitions of the k folds.
    #[arg(long, default_value_t = 5, value_name = "N")]
    repeats: usize,

    /// Per-run metrics CSV covering every variant.
    #[arg(long, value_name = "PATH")]
    runs_out: Option<PathBuf>,

    /// Per-variant mean/std summary CSV.
    #[arg(long, value_name = "PATH")]
    aggregate_out: Option<PathBuf>,

    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SearchArgs {
    /// Data CSV.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,

    /// Configurations to sample.
    #[arg(long, default_value_t = 20, value_name = "N")]
    trials: usize,

    /// Fraction of rows held out to score the trials, in (0, 1).
    #[arg(long, default_value_t = 0.2, value_name = "F")]
    holdout: f64,

    /// Trial log CSV.
    #[arg(long, value_name = "PATH")]
    trials_out: Option<PathBuf>,

    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct CountParamsArgs {
    /// Feature width the model is built for.
    #[arg(long, default_value_t = 512, value_name = "N")]
    input_dim: usize,

    /// Number of output classes.
    #[arg(long, default_value_t = 2, value_name = "N")]
    classes: usize,

    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Dataset CSV to write.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    /// Number of samples.
    #[arg(long, default_value_t = 1000, value_name = "N")]
    n: usize,

    /// Feature width.
    #[arg(long, default_value_t = 512, value_name = "N")]
    dim: usize,

    /// Number of balanced classes.
    #[arg(long, default_value_t = 2, value_name = "N")]
    classes: usize,

    /// Cluster overlap: 0 is trivially separable, larger blurs classes.
    #[arg(long, default_value_t = 0.3, value_name = "F")]
    difficulty: f64,

    /// Generator seed.
    #[arg(long, default_value_t = 0, value_name = "N")]
    seed: u64,
}

/// Failures split by exit code: usage problems exit 2, runtime failures 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<icmlp::Error> for CliError {
    fn from(e: icmlp::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let threads = cli.threads;
    match cli.command {
        Command::Train(args) => cmd_train(args, threads),
        Command::Eval(args) => cmd_eval(args, threads),
        Command::Predict(args) => cmd_predict(args, threads),
        Command::Uncertainty(args) => cmd_uncertainty(args, threads),
        Command::Crossval(args) => cmd_crossval(args, threads),
        Command::Ablate(args) => cmd_ablate(args, threads),
        Command::Search(args) => cmd_search(args, threads),
        Command::CountParams(args) => cmd_count_params(args, threads),
        Command::GenSynthetic(args) => cmd_gen_synthetic(args, threads),
    }
}

fn cmd_train(args: TrainArgs, threads: usize) -> CliResult {
    let cfg = args.config.resolve()?;
    print_config(&cfg, threads);
    println!("data = {}", args.data.display());
    println!("val_fraction = {}", args.val_fraction);
    println!("model_out = {}", args.out.display());
    if !(args.val_fraction > 0.0 && args.val_fraction < 1.0) {
        return Err(usage(format!(
            "val_fraction must lie in (0, 1), got {}",
            args.val_fraction
        )));
    }

    let ds = data::load_csv(&args.data, None)?;
    let mut split_rng = Rng::new(derive_seed(cfg.seed, &[SEED_STREAM_VAL_SPLIT]));
    let (train_ds, val_ds) = data::holdout_split(&ds, args.val_fraction, &mut split_rng)?;
    let result = train::fit(&train_ds, &val_ds, &cfg)?;
    result.model.save(&args.out)?;
    if let Some(path) = &args.history {
        report::write_history_csv(path, &result.history)?;
    }

    println!("epochs_run = {}", result.history.len());
    println!("best_epoch = {}", result.best_epoch);
    println!("best_val_loss = {}", result.best_val_loss);
    if let Some(rec) = result.history.iter().find(|r| r.epoch == result.best_epoch) {
        println!("best_val_acc = {}", rec.val_acc);
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs, threads: usize) -> CliResult {
    println!("model = {}", args.model.display());
    println!("data = {}", args.data.display());
    println!("threads = {threads}");

    let mut model = IcMlpModel::load(&args.model)?;
    let ds = data::load_csv(&args.data, Some(model.input_dim()))?;
    let (loss, acc) = train::evaluate(&mut model, &ds)?;
    println!("test_loss = {loss}");
    println!("test_acc = {acc}");
    Ok(())
}

fn cmd_predict(args: PredictArgs, threads: usize) -> CliResult {
    println!("model = {}", args.model.display());
    println!("data = {}", args.data.display());
    println!("out = {}", args.out.display());
    println!("threads = {threads}");

    let mut model = IcMlpModel::load(&args.model)?;
    let ds = data::load_csv(&args.data, Some(model.input_dim()))?;
    let predicted = predict_classes(&mut model, &ds)?;
    report::write_predictions_csv(&args.out, ds.labels(), &predicted)?;

    let correct = predicted
        .iter()
        .zip(ds.labels())
        .filter(|(p, l)| p == l)
        .count();
    println!("accuracy = {}", correct as f64 / ds.n_samples() as f64);
    Ok(())
}

/// Deterministic eval-mode argmax predictions, chunked to bound memory.
fn predict_classes(model: &mut IcMlpModel, ds: &Dataset) -> CliResult<Vec<usize>> {
    let prior = model.mode();
    model.set_mode(ModelMode::Eval);
    let mut rng = Rng::new(0);
    let mut predicted = Vec::with_capacity(ds.n_samples());
    let mut lo = 0;
    while lo < ds.n_samples() {
        let hi = (lo + PREDICT_CHUNK).min(ds.n_samples());
        let (x, _) = ds.slice_rows(lo, hi);
        let logits = match model.forward(&x, &mut rng) {
            Ok(t) => t,
            Err(e) => {
                model.set_mode(prior);
                return Err(e.into());
            }
        };
        for r in 0..logits.rows() {
            predicted.push(train::argmax_row(&logits, r));
        }
        lo = hi;
    }
    model.set_mode(prior);
    Ok(predicted)
}

fn cmd_uncertainty(args: UncertaintyArgs, threads: usize) -> CliResult {
    println!("model = {}", args.model.display());
    println!("data = {}", args.data.display());
    println!("out = {}", args.out.display());
    println!("passes = {}", args.passes);
    println!("seed = {}", args.seed);
    println!("force = {}", args.force);
    println!("threads = {threads}");

    let mut model = IcMlpModel::load(&args.model)?;
    let ds = data::load_csv(&args.data, Some(model.input_dim()))?;
    let mut rng = Rng::new(args.seed);
    let summary = mc_dropout_predict(
        &mut model,
        ds.features(),
        args.passes,
        &mut rng,
        false,
        args.force,
    )?;
    report::write_uncertainty_csv(&args.out, &summary)?;

    let mean_entropy =
        summary.entropies.iter().sum::<f64>() / summary.entropies.len() as f64;
    println!("mean_entropy = {mean_entropy}");
    if let Some(top) = args.top {
        let order = if args.highest {
            RankOrder::Highest
        } else {
            RankOrder::Lowest
        };
        let ranked = rank_by_entropy(&summary.entropies, top, order)?;
        let list = ranked
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        println!("top_samples = {list}");
    }
    Ok(())
}

fn cmd_crossval(args: CrossvalArgs, threads: usize) -> CliResult {
    let cfg = args.config.resolve()?;
    print_config(&cfg, threads);
    println!("data = {}", args.data.display());
    println!("k = {}", args.k);
    println!("repeats = {}", args.repeats);

    let ds = data::load_csv(&args.data, None)?;
    let report = train::cross_validate(&ds, &cfg, args.k, args.repeats, threads)?;
    if let Some(path) = &args.runs_out {
        report::write_runs_csv(path, &report.runs)?;
    }
    if let Some(path) = &args.aggregate_out {
        let rows = vec![(cfg.ablation.label(), report.aggregate.clone())];
        report::write_aggregate_csv(path, &rows)?;
    }
    println!("runs = {}", report.runs.len());
    print_aggregate(&report.aggregate);
    Ok(())
}

fn print_aggregate(agg: &train::CvAggregate) {
    for (i, name) in METRIC_NAMES.iter().enumerate() {
        println!("{name}_mean = {}", agg.mean[i]);
        println!("{name}_std = {}", agg.std[i]);
    }
}

fn cmd_ablate(args: AblateArgs, threads: usize) -> CliResult {
    let cfg = args.config.resolve()?;
    print_config(&cfg, threads);
    println!("data = {}", args.data.display());
    println!("k = {}", args.k);
    println!("repeats = {}", args.repeats);

    let ds = data::load_csv(&args.data, None)?;
    let variants = standard_variants();
    let reports = train::ablation_sweep(&ds, &cfg, &variants, args.k, args.repeats, threads)?;

    if let Some(path) = &args.runs_out {
        let all_runs: Vec<_> = reports
            .iter()
            .flat_map(|(_, rep)| rep.runs.iter().cloned())
            .collect();
        report::write_runs_csv(path, &all_runs)?;
    }
    if let Some(path) = &args.aggregate_out {
        let rows: Vec<_> = reports
            .iter()
            .map(|(label, rep)| (label.clone(), rep.aggregate.clone()))
            .collect();
        report::write_aggregate_csv(path, &rows)?;
    }
    // val_loss and test_acc are metrics 2 and 5 in METRIC_NAMES order.
    for (label, rep) in &reports {
        println!(
            "{label}: val_loss = {} +/- {}, test_acc = {} +/- {}",
            rep.aggregate.mean[2], rep.aggregate.std[2], rep.aggregate.mean[5], rep.aggregate.std[5]
        );
    }
    Ok(())
}

fn cmd_search(args: SearchArgs, threads: usize) -> CliResult {
    let cfg = args.config.resolve()?;
    print_config(&cfg, threads);
    println!("data = {}", args.data.display());
    println!("trials = {}", args.trials);
    println!("holdout = {}", args.holdout);
    if !(args.holdout > 0.0 && args.holdout < 1.0) {
        return Err(usage(format!(
            "holdout must lie in (0, 1), got {}",
            args.holdout
        )));
    }

    let ds = data::load_csv(&args.data, None)?;
    let space = train::SearchSpace::default();
    let result = train::random_search(&ds, &cfg, &space, args.trials, args.holdout, threads)?;
    if let Some(path) = &args.trials_out {
        report::write_trials_csv(path, &result.trials)?;
    }

    println!("best_trial = {}", result.best_trial);
    println!("best_val_loss = {}", result.best_val_loss);
    let best = &result.best_cfg;
    println!("best_n_residual = {}", best.n_residual);
    println!("best_n_downsample = {}", best.n_downsample);
    println!("best_batch_size = {}", best.batch_size);
    println!("best_initial_lr = {}", best.initial_lr);
    println!("best_weight_decay = {}", best.weight_decay);
    println!("best_lr_gamma = {}", best.lr_gamma);
    println!("best_seed = {}", best.seed);
    Ok(())
}

fn cmd_count_params(args: CountParamsArgs, threads: usize) -> CliResult {
    let cfg = args.config.resolve()?;
    print_config(&cfg, threads);
    println!("input_dim = {}", args.input_dim);
    println!("n_classes = {}", args.classes);

    let mut rng = Rng::new(cfg.seed);
    let model = build_model(
        args.input_dim,
        args.classes,
        cfg.n_residual,
        cfg.n_downsample,
        cfg.dropout_p,
        cfg.ablation,
        &mut rng,
    )?;
    println!("param_count = {}", model.param_count());
    Ok(())
}

fn cmd_gen_synthetic(args: GenSyntheticArgs, threads: usize) -> CliResult {
    println!("n = {}", args.n);
    println!("dim = {}", args.dim);
    println!("classes = {}", args.classes);
    println!("difficulty = {}", args.difficulty);
    println!("seed = {}", args.seed);
    println!("out = {}", args.out.display());
    println!("threads = {threads}");

    // Parameter problems here are flag mistakes, not runtime failures.
    let ds = synth::gen_synthetic(args.n, args.dim, args.classes, args.difficulty, args.seed)
        .map_err(|e| match e {
            icmlp::Error::Parameter(msg) => usage(msg),
            other => other.into(),
        })?;
    data::write_csv(&ds, &args.out)?;
    Ok(())
}
