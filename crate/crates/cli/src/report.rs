//! CSV report writers with fixed headers. Floats use Rust's shortest
//! round-trip formatting, so reruns with the same seed emit byte-identical
//! files.

use std::fmt::Write as _;
use std::path::Path;

use icmlp::train::{argmax_row, CvAggregate, EpochRecord, RunRow, TrialRecord, METRIC_NAMES};
use icmlp::uncertainty::PredictiveSummary;
use icmlp::{Error, Result};

/// One row per cross-validation run.
pub fn write_runs_csv(path: &Path, runs: &[RunRow]) -> Result<()> {
    let mut text = String::from(
        "variant,repeat,fold,best_epoch,train_loss,train_acc,val_loss,val_acc,test_loss,test_acc\n",
    );
    for r in runs {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.repeat,
            r.fold,
            r.best_epoch,
            r.train_loss,
            r.train_acc,
            r.val_loss,
            r.val_acc,
            r.test_loss,
            r.test_acc
        );
    }
    write_text(path, &text)
}

/// One row per variant with mean and standard deviation of every metric.
pub fn write_aggregate_csv(path: &Path, rows: &[(String, CvAggregate)]) -> Result<()> {
    let mut text = String::from("variant");
    for name in METRIC_NAMES {
        let _ = write!(text, ",{name}_mean,{name}_std");
    }
    text.push('\n');
    for (label, agg) in rows {
        text.push_str(label);
        for i in 0..METRIC_NAMES.len() {
            let _ = write!(text, ",{},{}", agg.mean[i], agg.std[i]);
        }
        text.push('\n');
    }
    write_text(path, &text)
}

/// One row per training epoch.
pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut text = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
    for r in history {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
        );
    }
    write_text(path, &text)
}

/// One row per sample with its dataset label and the predicted class.
pub fn write_predictions_csv(path: &Path, labels: &[usize], predicted: &[usize]) -> Result<()> {
    let mut text = String::from("sample_index,label,predicted_class\n");
    for (i, (l, p)) in labels.iter().zip(predicted).enumerate() {
        let _ = writeln!(text, "{i},{l},{p}");
    }
    write_text(path, &text)
}

/// One row per sample: predicted class, predictive entropy, and the
/// averaged class probabilities.
pub fn write_uncertainty_csv(path: &Path, summary: &PredictiveSummary) -> Result<()> {
    let n_classes = summary.mean_probs.cols();
    let mut text = String::from("sample_index,predicted_class,entropy");
    for c in 0..n_classes {
        let _ = write!(text, ",p_{c}");
    }
    text.push('\n');
    for i in 0..summary.mean_probs.rows() {
        let _ = write!(
            text,
            "{},{},{}",
            i,
            argmax_row(&summary.mean_probs, i),
            summary.entropies[i]
        );
        for &p in summary.mean_probs.row(i) {
            let _ = write!(text, ",{p}");
        }
        text.push('\n');
    }
    write_text(path, &text)
}

/// One row per search trial, keeping failed trials with their messages.
pub fn write_trials_csv(path: &Path, trials: &[TrialRecord]) -> Result<()> {
    let mut text = String::from(
        "trial,n_residual,n_downsample,batch_size,initial_lr,weight_decay,lr_gamma,seed,status,val_loss,error\n",
    );
    for t in trials {
        let c = &t.cfg;
        let _ = write!(
            text,
            "{},{},{},{},{},{},{},{}",
            t.trial,
            c.n_residual,
            c.n_downsample,
            c.batch_size,
            c.initial_lr,
            c.weight_decay,
            c.lr_gamma,
            c.seed
        );
        match &t.outcome {
            Ok(loss) => {
                let _ = writeln!(text, ",ok,{loss},");
            }
            Err(msg) => {
                let _ = writeln!(text, ",failed,,{}", csv_quote(msg));
            }
        }
    }
    write_text(path, &text)
}

/// Quotes a free-text field so embedded commas or quotes stay one column.
fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        context: format!("write report {}", path.display()),
        source: e,
    })
}
