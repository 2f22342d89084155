//! Settings resolution for commands that build or train a model.
//!
//! Four layers, each overriding the one before it: built-in defaults, a
//! named preset, a `key = value` config file, and individual flags. The
//! resolved configuration is printed in full before a command runs, so a
//! transcript always records exactly what executed.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use icmlp::model::Ablation;
use icmlp::train::TrainConfig;

use crate::CliError;

/// Hyperparameter flags shared by every command that builds a model.
/// Unset flags fall through to the config file, preset, or defaults.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Named hyperparameter preset: `gender` or `age`.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,

    /// `key = value` settings file applied over the preset.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Width-preserving residual blocks.
    #[arg(long, value_name = "N")]
    pub n_residual: Option<usize>,

    /// Width-halving blocks; must equal the residual count.
    #[arg(long, value_name = "N")]
    pub n_downsample: Option<usize>,

    /// Mini-batch size (at least 2).
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,

    /// Initial learning rate.
    #[arg(long = "lr", value_name = "F")]
    pub initial_lr: Option<f64>,

    /// Decoupled weight-decay coefficient.
    #[arg(long, value_name = "F")]
    pub weight_decay: Option<f64>,

    /// Per-epoch learning-rate decay factor in (0, 1].
    #[arg(long, value_name = "F")]
    pub lr_gamma: Option<f64>,

    /// Dropout rate in [0, 1).
    #[arg(long = "dropout", value_name = "F")]
    pub dropout_p: Option<f64>,

    /// Epochs without validation improvement before stopping.
    #[arg(long, value_name = "N")]
    pub patience: Option<usize>,

    /// Hard cap on training epochs.
    #[arg(long, value_name = "N")]
    pub max_epochs: Option<usize>,

    /// Seed for initialization, shuffling, and dropout.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Remove dropout but keep batch normalization.
    #[arg(long)]
    pub no_dropout: bool,

    /// Remove the whitening stage (batch norm and dropout) entirely.
    #[arg(long)]
    pub no_ic: bool,

    /// Disable the residual connections.
    #[arg(long)]
    pub no_skip: bool,

    /// Warm-start weights file matching the configured architecture.
    #[arg(long = "init", value_name = "PATH")]
    pub init_weights: Option<PathBuf>,
}

impl ConfigArgs {
    /// Resolves to a validated training configuration. Any failure here is
    /// a usage error: the command line or config file asked for something
    /// the trainer cannot accept.
    pub fn resolve(&self) -> Result<TrainConfig, CliError> {
        let mut cfg = TrainConfig::default();
        if let Some(name) = &self.preset {
            apply_preset(&mut cfg, name)?;
        }
        if let Some(path) = &self.config {
            apply_file(&mut cfg, path)?;
        }
        if let Some(v) = self.n_residual {
            cfg.n_residual = v;
        }
        if let Some(v) = self.n_downsample {
            cfg.n_downsample = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.initial_lr {
            cfg.initial_lr = v;
        }
        if let Some(v) = self.weight_decay {
            cfg.weight_decay = v;
        }
        if let Some(v) = self.lr_gamma {
            cfg.lr_gamma = v;
        }
        if let Some(v) = self.dropout_p {
            cfg.dropout_p = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        if let Some(v) = self.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if self.no_dropout {
            cfg.ablation.no_dropout = true;
        }
        if self.no_ic {
            cfg.ablation.no_ic = true;
        }
        if self.no_skip {
            cfg.ablation.no_skip = true;
        }
        if let Some(path) = &self.init_weights {
            cfg.init_weights = Some(path.clone());
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

/// Published hyperparameters for the two reference tasks.
fn apply_preset(cfg: &mut TrainConfig, name: &str) -> Result<(), CliError> {
    match name {
        "gender" => {
            cfg.n_residual = 4;
            cfg.n_downsample = 4;
            cfg.batch_size = 512;
            cfg.initial_lr = 2e-2;
            cfg.weight_decay = 4e-3;
            cfg.lr_gamma = 6e-2;
        }
        "age" => {
            cfg.n_residual = 2;
            cfg.n_downsample = 2;
            cfg.batch_size = 128;
            cfg.initial_lr = 2e-3;
            cfg.weight_decay = 1e-4;
            cfg.lr_gamma = 0.4;
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown preset `{other}` (expected `gender` or `age`)"
            )));
        }
    }
    Ok(())
}

/// Applies a settings file: one `key = value` per line, `#` starts a
/// comment, blank lines are skipped. Keys are the training configuration's
/// own field names.
fn apply_file(cfg: &mut TrainConfig, path: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| CliError::Usage(format!("config file {} line {}: {msg}", path.display(), i + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| at("expected `key = value`".into()))?;
        apply_key(cfg, key.trim(), value.trim()).map_err(|e| match e {
            CliError::Usage(msg) => at(msg),
            other => other,
        })?;
    }
    Ok(())
}

fn apply_key(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<(), CliError> {
    match key {
        "n_residual" => cfg.n_residual = parse(key, value)?,
        "n_downsample" => cfg.n_downsample = parse(key, value)?,
        "batch_size" => cfg.batch_size = parse(key, value)?,
        "initial_lr" => cfg.initial_lr = parse(key, value)?,
        "weight_decay" => cfg.weight_decay = parse(key, value)?,
        "lr_gamma" => cfg.lr_gamma = parse(key, value)?,
        "dropout_p" => cfg.dropout_p = parse(key, value)?,
        "patience" => cfg.patience = parse(key, value)?,
        "max_epochs" => cfg.max_epochs = parse(key, value)?,
        "seed" => cfg.seed = parse(key, value)?,
        "ablation" => cfg.ablation = parse_ablation(value)?,
        "init_weights" => cfg.init_weights = Some(PathBuf::from(value)),
        other => return Err(CliError::Usage(format!("unknown config key `{other}`"))),
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("key `{key}`: cannot parse `{value}`: {e}")))
}

/// Inverse of `Ablation::label`: `full`, or `+`-joined removals.
fn parse_ablation(value: &str) -> Result<Ablation, CliError> {
    let mut ablation = Ablation::FULL;
    if value == "full" {
        return Ok(ablation);
    }
    for part in value.split('+') {
        match part.trim() {
            "no_dropout" => ablation.no_dropout = true,
            "no_ic" => ablation.no_ic = true,
            "no_skip" => ablation.no_skip = true,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown ablation `{other}` (expected no_dropout, no_ic, no_skip, or full)"
                )));
            }
        }
    }
    Ok(ablation)
}

/// Prints the fully resolved settings, defaults included, one
/// `key = value` line each.
pub fn print_config(cfg: &TrainConfig, threads: usize) {
    println!("n_residual = {}", cfg.n_residual);
    println!("n_downsample = {}", cfg.n_downsample);
    println!("batch_size = {}", cfg.batch_size);
    println!("initial_lr = {}", cfg.initial_lr);
    println!("weight_decay = {}", cfg.weight_decay);
    println!("lr_gamma = {}", cfg.lr_gamma);
    println!("dropout_p = {}", cfg.dropout_p);
    println!("patience = {}", cfg.patience);
    println!("max_epochs = {}", cfg.max_epochs);
    println!("seed = {}", cfg.seed);
    println!("ablation = {}", cfg.ablation.label());
    match &cfg.init_weights {
        Some(path) => println!("init_weights = {}", path.display()),
        None => println!("init_weights = none"),
    }
    println!("threads = {threads}");
}
