//! Monte-Carlo-dropout predictive uncertainty.
//!
//! Repeated stochastic forward passes with dropout left on (and
//! normalization running off its running statistics) give a sample of
//! predictive distributions; their average is the predictive mean, and the
//! entropy of that average ranks samples by uncertainty.

use crate::error::{Error, Result};
use crate::layers::softmax_rows;
use crate::model::{IcMlpModel, ModelMode};
use crate::rng::Rng;
use crate::tensor::Tensor2D;

#[derive(Debug, Clone)]
pub struct PredictiveSummary {
    /// Mean softmax probabilities over passes, one row per sample.
    pub mean_probs: Tensor2D,
    /// Entropy (nats) of each row of `mean_probs`.
    pub entropies: Vec<f64>,
    /// Per-pass probabilities, kept only on request.
    pub per_pass: Option<Vec<Tensor2D>>,
}

/// Runs `t_passes` stochastic forward passes and summarizes them.
///
/// A model whose dropout was ablated away produces identical passes and a
/// degenerate entropy estimate, so it is rejected unless `force` is set.
/// The model's mode is restored afterwards.
pub fn mc_dropout_predict(
    model: &mut IcMlpModel,
    x: &Tensor2D,
    t_passes: usize,
    rng: &mut Rng,
    keep_passes: bool,
    force: bool,
) -> Result<PredictiveSummary> {
    if t_passes == 0 {
        return Err(Error::Parameter(
            "uncertainty needs at least one pass".into(),
        ));
    }
    if !model.has_stochastic_dropout() && !force {
        return Err(Error::Config(format!(
            "model variant '{}' has no dropout layers, so its passes are \
             deterministic and the uncertainty estimate is degenerate \
             (force to run anyway)",
            model.ablation().label()
        )));
    }
    let prior = model.mode();
    model.set_mode(ModelMode::McDropout);
    let run = (|| -> Result<(Tensor2D, Option<Vec<Tensor2D>>)> {
        let mut acc = Tensor2D::zeros(x.rows(), model.n_classes());
        let mut passes = keep_passes.then(Vec::new);
        for _ in 0..t_passes {
            let probs = softmax_rows(&model.forward(x, rng)?);
            acc.add_assign(&probs)?;
            if let Some(p) = &mut passes {
                p.push(probs);
            }
        }
        Ok((acc.scale(1.0 / t_passes as f64), passes))
    })();
    model.set_mode(prior);
    let (mean_probs, per_pass) = run?;

    let mut entropies = Vec::with_capacity(mean_probs.rows());
    for r in 0..mean_probs.rows() {
        entropies.push(entropy(mean_probs.row(r))?);
    }
    Ok(PredictiveSummary {
        mean_probs,
        entropies,
        per_pass,
    })
}

/// Shannon entropy in nats, with `0 * ln 0 = 0`. The input must be a
/// probability vector: non-negative, summing to 1 within 1e-6.
pub fn entropy(probs: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for &p in probs {
        if p.is_nan() || p < 0.0 {
            return Err(Error::Distribution(format!(
                "probabilities must be non-negative, found {p}"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Distribution(format!(
            "probabilities must sum to 1, got {sum}"
        )));
    }
    Ok(probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankOrder {
    /// Most certain first.
    Lowest,
    /// Most uncertain first.
    Highest,
}

/// Indices of the `top_n` samples by entropy. The sort is stable, so equal
/// entropies keep their index order.
pub fn rank_by_entropy(entropies: &[f64], top_n: usize, order: RankOrder) -> Result<Vec<usize>> {
    if top_n > entropies.len() {
        return Err(Error::Parameter(format!(
            "top_n {top_n} exceeds the {} available samples",
            entropies.len()
        )));
    }
    let mut idx: Vec<usize> = (0..entropies.len()).collect();
    match order {
        RankOrder::Lowest => idx.sort_by(|&a, &b| entropies[a].total_cmp(&entropies[b])),
        RankOrder::Highest => idx.sort_by(|&a, &b| entropies[b].total_cmp(&entropies[a])),
    }
    idx.truncate(top_n);
    Ok(idx)
}
