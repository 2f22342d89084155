//! Training loop, early stopping, repeated k-fold cross-validation, the
//! ablation sweep, and random hyperparameter search.
//!
//! Determinism contract: a (config, dataset) pair fully determines every
//! reported number. All shuffles, initializations, and dropout masks draw
//! from generators seeded off `TrainConfig::seed`, and parallel sub-runs get
//! independently derived seeds keyed by their position, so results do not
//! depend on thread count or completion order.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::data::{batches, holdout_split, make_folds, Dataset};
use crate::data::{SEED_STREAM_CV_RUN, SEED_STREAM_SEARCH_SPLIT};
use crate::error::{Error, Result};
use crate::layers::softmax_cross_entropy;
use crate::model::{build_model, Ablation, IcMlpModel, ModelMode};
use crate::optim::{AdamW, ExponentialLr};
use crate::rng::{derive_seed, Rng};
use crate::tensor::Tensor2D;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_residual: usize,
    pub n_downsample: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub weight_decay: f64,
    pub lr_gamma: f64,
    pub dropout_p: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub ablation: Ablation,
    /// Warm-start weights; the file must match the configured architecture.
    pub init_weights: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_residual: 2,
            n_downsample: 2,
            batch_size: 128,
            initial_lr: 1e-3,
            weight_decay: 1e-4,
            lr_gamma: 0.95,
            dropout_p: 0.05,
            patience: 5,
            max_epochs: 100,
            seed: 0,
            ablation: Ablation::FULL,
            init_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_residual == 0 || self.n_downsample == 0 {
            return Err(Error::Config("block counts must be positive".into()));
        }
        if self.n_residual != self.n_downsample {
            return Err(Error::Config(format!(
                "residual and downsample block counts must match, got {} and {}",
                self.n_residual, self.n_downsample
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if !(self.initial_lr.is_finite() && self.initial_lr >= 0.0) {
            return Err(Error::Config(format!(
                "initial_lr must be finite and >= 0, got {}",
                self.initial_lr
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight_decay must be finite and >= 0, got {}",
                self.weight_decay
            )));
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) {
            return Err(Error::Config(format!(
                "lr_gamma must lie in (0, 1], got {}",
                self.lr_gamma
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Metrics for one epoch; `epoch` is 1-based. Train metrics are measured
/// during the training pass itself (dropout active, weights moving),
/// validation metrics by a deterministic eval pass afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Stops training after `patience` consecutive epochs without a strictly
/// new best validation loss.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Parameter("patience must be positive".into()));
        }
        Ok(EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        })
    }

    /// Feeds one epoch's validation loss; returns true when it is a new best.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// One shuffled pass over the training set: forward, loss, backward, AdamW
/// step per batch. Returns sample-weighted (loss, accuracy) over the batches
/// actually used. A non-finite batch loss aborts with a divergence error
/// naming the batch.
pub fn train_epoch(
    model: &mut IcMlpModel,
    opt: &mut AdamW,
    train: &Dataset,
    batch_size: usize,
    epoch: usize,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    model.set_mode(ModelMode::Train);
    let batch_list = batches(train, batch_size, rng)?;
    if batch_list.is_empty() {
        return Err(Error::BatchTooSmall {
            got: train.n_samples(),
            context: "no usable training batches (need at least 2 samples)",
        });
    }
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut seen = 0usize;
    for (bi, batch) in batch_list.iter().enumerate() {
        let logits = model.forward(&batch.x, rng)?;
        let (loss, grad) = softmax_cross_entropy(&logits, &batch.y)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, batch: bi });
        }
        model.zero_grads();
        model.backward(&grad)?;
        opt.step(model)?;
        let b = batch.y.len();
        loss_sum += loss * b as f64;
        correct += count_correct(&logits, &batch.y);
        seen += b;
    }
    Ok((loss_sum / seen as f64, correct as f64 / seen as f64))
}

/// Deterministic whole-dataset metrics in eval mode. The model's mode is
/// restored afterwards. Ties at the argmax go to the lowest class index.
pub fn evaluate(model: &mut IcMlpModel, ds: &Dataset) -> Result<(f64, f64)> {
    if ds.n_samples() == 0 {
        return Err(Error::Parameter("evaluate on an empty dataset".into()));
    }
    let prior = model.mode();
    model.set_mode(ModelMode::Eval);
    // Eval-mode forward never draws; the generator is a placeholder.
    let mut unused_rng = Rng::new(0);
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let n = ds.n_samples();
    let mut at = 0usize;
    let result = loop {
        if at >= n {
            break Ok(());
        }
        let hi = (at + EVAL_CHUNK).min(n);
        let (x, y) = ds.slice_rows(at, hi);
        match model.forward(&x, &mut unused_rng) {
            Err(e) => break Err(e),
            Ok(logits) => match softmax_cross_entropy(&logits, y) {
                Err(e) => break Err(e),
                Ok((loss, _)) => {
                    loss_sum += loss * y.len() as f64;
                    correct += count_correct(&logits, y);
                }
            },
        }
        at = hi;
    };
    model.set_mode(prior);
    result?;
    Ok((loss_sum / n as f64, correct as f64 / n as f64))
}

const EVAL_CHUNK: usize = 256;

fn count_correct(logits: &Tensor2D, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(r, &label)| argmax_row(logits, r) == label)
        .count()
}

/// Index of the row maximum; ties resolve to the lowest index.
pub fn argmax_row(t: &Tensor2D, r: usize) -> usize {
    let mut best = 0usize;
    let mut best_v = t.get(r, 0);
    for c in 1..t.cols() {
        let v = t.get(r, c);
        if v > best_v {
            best_v = v;
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Weights as of the best validation epoch, not the last one run.
    pub model: IcMlpModel,
}

/// Trains on `train` with early stopping against `val`. The datasets must
/// be disjoint and share a feature width. Returns the best-epoch weights.
pub fn fit(train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<FitResult> {
    cfg.validate()?;
    if train.input_dim() != val.input_dim() {
        return Err(Error::Config(format!(
            "train and validation feature widths differ: {} vs {}",
            train.input_dim(),
            val.input_dim()
        )));
    }
    let n_classes = train.n_classes().max(val.n_classes());
    let mut rng = Rng::new(cfg.seed);
    let mut model = match &cfg.init_weights {
        None => build_model(
            train.input_dim(),
            n_classes,
            cfg.n_residual,
            cfg.n_downsample,
            cfg.dropout_p,
            cfg.ablation,
            &mut rng,
        )?,
        Some(path) => {
            let m = IcMlpModel::load(path)?;
            if m.input_dim() != train.input_dim()
                || m.n_classes() != n_classes
                || m.n_residual() != cfg.n_residual
                || m.ablation() != cfg.ablation
            {
                return Err(Error::Config(format!(
                    "warm-start weights at {} do not match the configured architecture",
                    path.display()
                )));
            }
            m
        }
    };
    let mut opt = AdamW::new(&model, cfg.initial_lr, cfg.weight_decay)?;
    let sched = ExponentialLr::new(cfg.initial_lr, cfg.lr_gamma)?;
    let mut stopper = EarlyStopper::new(cfg.patience)?;
    let mut history = Vec::new();
    let mut best_model: Option<IcMlpModel> = None;

    for epoch in 1..=cfg.max_epochs {
        opt.set_lr(sched.lr_at_epoch(epoch - 1));
        let (train_loss, train_acc) =
            train_epoch(&mut model, &mut opt, train, cfg.batch_size, epoch, &mut rng)?;
        let (val_loss, val_acc) = evaluate(&mut model, val)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        });
        if stopper.observe(epoch, val_loss) {
            best_model = Some(model.clone());
        }
        if stopper.should_stop() {
            break;
        }
    }
    let (best_epoch, best_val_loss) = (stopper.best_epoch(), stopper.best_loss());
    Ok(FitResult {
        history,
        best_epoch,
        best_val_loss,
        model: best_model.unwrap_or(model),
    })
}

/// One cross-validation run's report row. Train/validation metrics are
/// taken at the best epoch; test metrics come from evaluating the
/// best-epoch weights on the held-out test fold.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub variant: String,
    pub repeat: usize,
    pub fold: usize,
    pub best_epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

impl RunRow {
    pub fn metrics(&self) -> [f64; 6] {
        [
            self.train_loss,
            self.train_acc,
            self.val_loss,
            self.val_acc,
            self.test_loss,
            self.test_acc,
        ]
    }
}

pub const METRIC_NAMES: [&str; 6] = [
    "train_loss",
    "train_acc",
    "val_loss",
    "val_acc",
    "test_loss",
    "test_acc",
];

/// Per-metric mean and population standard deviation over runs,
/// in [`METRIC_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct CvAggregate {
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub runs: Vec<RunRow>,
    pub aggregate: CvAggregate,
}

/// Population statistics: std divides by n, not n - 1, because the runs
/// are the entire population being summarized.
pub fn aggregate_runs(runs: &[RunRow]) -> Result<CvAggregate> {
    if runs.is_empty() {
        return Err(Error::Parameter("aggregate of zero runs".into()));
    }
    let n = runs.len() as f64;
    let mut mean = [0.0; 6];
    for run in runs {
        for (m, v) in mean.iter_mut().zip(run.metrics()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = [0.0; 6];
    for run in runs {
        for (s, (v, m)) in var.iter_mut().zip(run.metrics().into_iter().zip(mean)) {
            *s += (v - m) * (v - m);
        }
    }
    let mut std = [0.0; 6];
    for (s, v) in std.iter_mut().zip(var) {
        *s = (v / n).sqrt();
    }
    Ok(CvAggregate { mean, std })
}

/// Repeated k-fold cross-validation. For each repeat's fold assignment,
/// fold `t` is the test set, fold `(t + 1) % k` is the validation set, and
/// the rest train; with only two folds the validation fold also serves as
/// the training set. Each of the `k * repeats` runs trains from scratch
/// with a seed derived from (seed, repeat, fold), so reports are
/// reproducible and independent of `threads`.
pub fn cross_validate(
    ds: &Dataset,
    cfg: &TrainConfig,
    k: usize,
    repeats: usize,
    threads: usize,
) -> Result<CvReport> {
    cfg.validate()?;
    let plan = make_folds(ds, k, repeats, cfg.seed)?;
    let n_runs = k * repeats;
    let results = run_indexed(n_runs, threads, |i| -> Result<RunRow> {
        let repeat = i / k;
        let test_fold = i % k;
        let run = || -> Result<RunRow> {
            let val_fold = (test_fold + 1) % k;
            let assignment = &plan.folds[repeat];
            let mut train_idx = Vec::new();
            for (f, fold) in assignment.iter().enumerate() {
                if f != test_fold && f != val_fold {
                    train_idx.extend_from_slice(fold);
                }
            }
            if train_idx.is_empty() {
                // With k = 2 no third fold remains; the non-test fold both
                // trains and validates, so two-fold CV still yields k runs
                // per repeat.
                train_idx.extend_from_slice(&assignment[val_fold]);
            }
            let train_ds = ds.subset(&train_idx)?;
            let val_ds = ds.subset(&assignment[val_fold])?;
            let test_ds = ds.subset(&assignment[test_fold])?;
            let mut run_cfg = cfg.clone();
            run_cfg.seed = derive_seed(
                cfg.seed,
                &[SEED_STREAM_CV_RUN, repeat as u64, test_fold as u64],
            );
            let mut result = fit(&train_ds, &val_ds, &run_cfg)?;
            let at_best = result
                .history
                .iter()
                .find(|rec| rec.epoch == result.best_epoch)
                .cloned()
                .unwrap_or_else(|| result.history.last().cloned().expect("non-empty history"));
            let (test_loss, test_acc) = evaluate(&mut result.model, &test_ds)?;
            Ok(RunRow {
                variant: cfg.ablation.label(),
                repeat,
                fold: test_fold,
                best_epoch: result.best_epoch,
                train_loss: at_best.train_loss,
                train_acc: at_best.train_acc,
                val_loss: at_best.val_loss,
                val_acc: at_best.val_acc,
                test_loss,
                test_acc,
            })
        };
        run().map_err(|e| Error::CvRun {
            repeat,
            fold: test_fold,
            source: Box::new(e),
        })
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate_runs(&runs)?;
    Ok(CvReport { runs, aggregate })
}

/// Cross-validates each ablation variant under the same seed, so every
/// variant sees identical fold assignments and differs only structurally.
pub fn ablation_sweep(
    ds: &Dataset,
    cfg: &TrainConfig,
    variants: &[Ablation],
    k: usize,
    repeats: usize,
    threads: usize,
) -> Result<Vec<(String, CvReport)>> {
    if variants.is_empty() {
        return Err(Error::Parameter("ablation sweep needs variants".into()));
    }
    let mut out = Vec::with_capacity(variants.len());
    for &variant in variants {
        let mut v_cfg = cfg.clone();
        v_cfg.ablation = variant;
        let report = cross_validate(ds, &v_cfg, k, repeats, threads)?;
        out.push((variant.label(), report));
    }
    Ok(out)
}

/// How a scalar hyperparameter is drawn in random search.
#[derive(Debug, Clone)]
pub enum Draw {
    Fixed(f64),
    /// `exp(Uniform(ln lo, ln hi))`; requires `0 < lo <= hi`.
    LogUniform(f64, f64),
    Choice(Vec<f64>),
}

impl Draw {
    fn sample(&self, rng: &mut Rng) -> Result<f64> {
        match self {
            Draw::Fixed(v) => Ok(*v),
            Draw::LogUniform(lo, hi) => {
                if !(*lo > 0.0 && lo <= hi) {
                    return Err(Error::Parameter(format!(
                        "log-uniform range needs 0 < lo <= hi, got [{lo}, {hi}]"
                    )));
                }
                if lo == hi {
                    return Ok(*lo);
                }
                Ok((lo.ln() + rng.next_f64() * (hi.ln() - lo.ln())).exp())
            }
            Draw::Choice(vs) => {
                if vs.is_empty() {
                    return Err(Error::Parameter("empty choice list".into()));
                }
                Ok(vs[rng.below(vs.len())])
            }
        }
    }
}

/// Search space over the tuned hyperparameters. Residual and downsample
/// counts move together as one block-count dimension.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    pub n_blocks: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub initial_lr: Draw,
    pub weight_decay: Draw,
    pub lr_gamma: Draw,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            n_blocks: vec![1, 2, 3, 4],
            batch_size: vec![128, 256, 512],
            initial_lr: Draw::LogUniform(1e-4, 1e-1),
            weight_decay: Draw::LogUniform(1e-5, 1e-2),
            lr_gamma: Draw::LogUniform(1e-2, 1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub cfg: TrainConfig,
    /// Held-out validation loss, or the failure message.
    pub outcome: std::result::Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best_trial: usize,
    pub best_cfg: TrainConfig,
    pub best_val_loss: f64,
    pub trials: Vec<TrialRecord>,
}

/// Random search: samples `n_trials` configurations, fits each on the kept
/// side of a single holdout split, and keeps the configuration with the
/// lowest held-out validation loss (ties to the lowest trial index).
/// Trial `i` runs with seed `base_seed XOR i`. Failed trials are recorded
/// and skipped; if every trial fails the whole search errors.
pub fn random_search(
    ds: &Dataset,
    base_cfg: &TrainConfig,
    space: &SearchSpace,
    n_trials: usize,
    holdout_fraction: f64,
    threads: usize,
) -> Result<SearchResult> {
    if n_trials == 0 {
        return Err(Error::Parameter("search needs at least one trial".into()));
    }
    if space.n_blocks.is_empty() || space.batch_size.is_empty() {
        return Err(Error::Parameter("empty search dimension".into()));
    }
    let mut split_rng = Rng::new(derive_seed(base_cfg.seed, &[SEED_STREAM_SEARCH_SPLIT]));
    let (train_part, val_part) = holdout_split(ds, holdout_fraction, &mut split_rng)?;

    let trials = run_indexed(n_trials, threads, |i| -> TrialRecord {
        let trial_seed = base_cfg.seed ^ (i as u64);
        let mut rng = Rng::new(trial_seed);
        let sampled = (|| -> Result<TrainConfig> {
            let n_blocks = space.n_blocks[rng.below(space.n_blocks.len())];
            let batch_size = space.batch_size[rng.below(space.batch_size.len())];
            let mut cfg = base_cfg.clone();
            cfg.n_residual = n_blocks;
            cfg.n_downsample = n_blocks;
            cfg.batch_size = batch_size;
            cfg.initial_lr = space.initial_lr.sample(&mut rng)?;
            cfg.weight_decay = space.weight_decay.sample(&mut rng)?;
            cfg.lr_gamma = space.lr_gamma.sample(&mut rng)?;
            cfg.seed = trial_seed;
            Ok(cfg)
        })();
        match sampled {
            Err(e) => TrialRecord {
                trial: i,
                cfg: base_cfg.clone(),
                outcome: Err(e.to_string()),
            },
            Ok(cfg) => {
                let outcome = fit(&train_part, &val_part, &cfg)
                    .map(|r| r.best_val_loss)
                    .map_err(|e| e.to_string());
                TrialRecord {
                    trial: i,
                    cfg,
                    outcome,
                }
            }
        }
    });

    let mut best: Option<(usize, f64)> = None;
    for t in &trials {
        if let Ok(loss) = t.outcome {
            let better = match best {
                None => true,
                Some((_, b)) => loss < b,
            };
            if better {
                best = Some((t.trial, loss));
            }
        }
    }
    match best {
        Some((best_trial, best_val_loss)) => Ok(SearchResult {
            best_trial,
            best_cfg: trials[best_trial].cfg.clone(),
            best_val_loss,
            trials,
        }),
        None => Err(Error::SearchFailed {
            failures: trials
                .iter()
                .map(|t| t.outcome.clone().err().unwrap_or_default())
                .collect(),
        }),
    }
}

/// Runs `f(0..n)` on up to `threads` workers and returns results in index
/// order. Results are keyed by index, so the output is identical for any
/// thread count.
fn run_indexed<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = threads.max(1).min(n.max(1));
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i);
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}
