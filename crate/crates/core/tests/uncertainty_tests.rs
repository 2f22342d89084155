//! Monte-Carlo-dropout inference: entropy oracles and bounds, ranking
//! rules, pass averaging, mode restoration, and the use of running rather
//! than batch normalization statistics at prediction time.

mod common;

use common::assert_tensors_bitwise;
use icmlp::error::Error;
use icmlp::layers::softmax_rows;
use icmlp::model::{build_model, Ablation, IcMlpModel, ModelMode};
use icmlp::rng::Rng;
use icmlp::uncertainty::{entropy, mc_dropout_predict, rank_by_entropy, RankOrder};

fn mk_model(dropout_p: f64, ablation: Ablation, seed: u64) -> IcMlpModel {
    build_model(8, 3, 1, 1, dropout_p, ablation, &mut Rng::new(seed)).unwrap()
}

fn variant(no_dropout: bool, no_ic: bool, no_skip: bool) -> Ablation {
    Ablation {
        no_dropout,
        no_ic,
        no_skip,
    }
}

// ---------------------------------------------------------------- entropy

#[test]
fn entropy_matches_hand_oracles() {
    assert_eq!(entropy(&[1.0, 0.0]).unwrap(), 0.0);
    let ln2 = std::f64::consts::LN_2;
    assert!((entropy(&[0.5, 0.5]).unwrap() - ln2).abs() < 1e-15);
    // The four-decimal reference values for ln 2 and ln 4.
    #[allow(clippy::approx_constant)]
    let quoted_ln2 = 0.6931;
    assert!((entropy(&[0.5, 0.5]).unwrap() - quoted_ln2).abs() < 1e-4);
    assert!((entropy(&[0.25; 4]).unwrap() - 2.0 * ln2).abs() < 1e-15);
    assert!((entropy(&[0.25; 4]).unwrap() - 1.3863).abs() < 1e-4);
    // A fully concentrated longer vector still has zero entropy.
    assert_eq!(entropy(&[0.0, 0.0, 1.0, 0.0]).unwrap(), 0.0);
}

#[test]
fn entropy_treats_zero_entries_as_zero_terms() {
    // 0 * ln 0 must contribute nothing, not NaN.
    let h = entropy(&[0.5, 0.5, 0.0]).unwrap();
    assert!((h - std::f64::consts::LN_2).abs() < 1e-15);
    assert!(h.is_finite());
}

#[test]
fn entropy_rejects_malformed_distributions() {
    assert!(matches!(
        entropy(&[0.5, -0.1, 0.6]),
        Err(Error::Distribution(_))
    ));
    assert!(matches!(
        entropy(&[f64::NAN, 1.0]),
        Err(Error::Distribution(_))
    ));
    assert!(matches!(entropy(&[0.4, 0.5]), Err(Error::Distribution(_))));
    assert!(matches!(entropy(&[0.6, 0.6]), Err(Error::Distribution(_))));
    assert!(matches!(entropy(&[]), Err(Error::Distribution(_))));
    // The sum tolerance is 1e-6: half a micro off is accepted.
    assert!(entropy(&[0.5, 0.4999995]).is_ok());
}

#[test]
fn entropy_is_bounded_by_zero_and_ln_c() {
    let mut rng = Rng::new(1);
    for _ in 0..50 {
        let c = 2 + rng.below(5);
        let raw = rng.uniform(0.01, 1.0, 1, c).unwrap();
        let total: f64 = raw.data().iter().sum();
        let probs: Vec<f64> = raw.data().iter().map(|v| v / total).collect();
        let h = entropy(&probs).unwrap();
        assert!(h >= 0.0, "entropy {h} below zero");
        assert!(
            h <= (c as f64).ln() + 1e-12,
            "entropy {h} above ln {c}"
        );
    }
    // The bounds are attained: one-hot at 0, uniform at ln C.
    assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
    let uniform = [1.0 / 3.0; 3];
    assert!((entropy(&uniform).unwrap() - 3.0f64.ln()).abs() < 1e-12);
}

// ---------------------------------------------------------------- ranking

#[test]
fn ranking_returns_the_requested_extreme() {
    let entropies = [0.1, 0.5, 0.0];
    assert_eq!(
        rank_by_entropy(&entropies, 1, RankOrder::Lowest).unwrap(),
        [2]
    );
    assert_eq!(
        rank_by_entropy(&entropies, 2, RankOrder::Highest).unwrap(),
        [1, 0]
    );
    assert_eq!(
        rank_by_entropy(&entropies, 3, RankOrder::Lowest).unwrap(),
        [2, 0, 1]
    );
    assert_eq!(
        rank_by_entropy(&entropies, 0, RankOrder::Lowest).unwrap(),
        Vec::<usize>::new()
    );
}

#[test]
fn ranking_breaks_ties_by_index_and_checks_top_n() {
    let flat = [0.25, 0.25, 0.25, 0.25];
    assert_eq!(
        rank_by_entropy(&flat, 3, RankOrder::Lowest).unwrap(),
        [0, 1, 2]
    );
    assert_eq!(
        rank_by_entropy(&flat, 2, RankOrder::Highest).unwrap(),
        [0, 1]
    );
    let mixed = [0.3, 0.1, 0.3, 0.1];
    assert_eq!(
        rank_by_entropy(&mixed, 4, RankOrder::Lowest).unwrap(),
        [1, 3, 0, 2]
    );
    assert!(matches!(
        rank_by_entropy(&flat, 5, RankOrder::Lowest),
        Err(Error::Parameter(_))
    ));
}

// ----------------------------------------------------------- mc dropout

#[test]
fn prediction_requires_passes_and_stochastic_dropout() {
    let x = Rng::new(2).uniform(-1.0, 1.0, 4, 8).unwrap();

    let mut model = mk_model(0.1, Ablation::FULL, 3);
    assert!(matches!(
        mc_dropout_predict(&mut model, &x, 0, &mut Rng::new(0), false, false),
        Err(Error::Parameter(_))
    ));

    // Ablations that remove dropout make every pass identical; the call is
    // refused and the message names the variant.
    for abl in [variant(true, false, false), variant(false, true, false)] {
        let mut det = mk_model(0.1, abl, 3);
        match mc_dropout_predict(&mut det, &x, 4, &mut Rng::new(0), false, false) {
            Err(Error::Config(msg)) => assert!(
                msg.contains(&abl.label()),
                "message should name '{}': {msg}",
                abl.label()
            ),
            other => panic!("expected a config refusal, got {other:?}"),
        }
    }
}

#[test]
fn forcing_a_deterministic_model_averages_identical_passes() {
    let x = Rng::new(4).uniform(-1.0, 1.0, 3, 8).unwrap();
    let mut model = mk_model(0.1, variant(true, false, false), 5);
    let summary =
        mc_dropout_predict(&mut model, &x, 4, &mut Rng::new(0), true, true).unwrap();

    let passes = summary.per_pass.as_ref().unwrap();
    assert_eq!(passes.len(), 4);
    for p in &passes[1..] {
        assert_tensors_bitwise(p, &passes[0], "deterministic passes");
    }
    // Four identical tensors average back to themselves exactly.
    assert_tensors_bitwise(&summary.mean_probs, &passes[0], "mean of identical passes");
    for (r, h) in summary.entropies.iter().enumerate() {
        let single = entropy(passes[0].row(r)).unwrap();
        assert_eq!(*h, single, "entropy equals the single-pass entropy");
    }
}

#[test]
fn zero_rate_dropout_is_stochastic_in_name_only() {
    // p = 0 keeps the dropout layers (and their rng draws) but every mask
    // is all-ones, so passes are identical without forcing.
    let x = Rng::new(6).uniform(-1.0, 1.0, 3, 8).unwrap();
    let mut model = mk_model(0.0, Ablation::FULL, 7);
    let summary =
        mc_dropout_predict(&mut model, &x, 4, &mut Rng::new(1), true, false).unwrap();
    let passes = summary.per_pass.as_ref().unwrap();
    for p in &passes[1..] {
        assert_tensors_bitwise(p, &passes[0], "p = 0 passes");
    }
    assert_tensors_bitwise(&summary.mean_probs, &passes[0], "p = 0 mean");
}

#[test]
fn a_single_pass_is_its_own_summary() {
    // One pass, one sample: the paper's single-image use case.
    let x = Rng::new(8).uniform(-1.0, 1.0, 1, 8).unwrap();
    let mut model = mk_model(0.2, Ablation::FULL, 9);
    let summary =
        mc_dropout_predict(&mut model, &x, 1, &mut Rng::new(2), true, false).unwrap();
    let passes = summary.per_pass.as_ref().unwrap();
    assert_eq!(passes.len(), 1);
    assert_tensors_bitwise(&summary.mean_probs, &passes[0], "T = 1");
    assert_eq!(summary.entropies.len(), 1);
}

#[test]
fn summaries_are_normalized_and_bounded() {
    let x = Rng::new(10).uniform(-1.0, 1.0, 5, 8).unwrap();
    let mut model = mk_model(0.3, Ablation::FULL, 11);
    let summary =
        mc_dropout_predict(&mut model, &x, 32, &mut Rng::new(3), false, false).unwrap();

    assert!(summary.per_pass.is_none(), "passes kept only on request");
    assert_eq!(summary.mean_probs.shape(), (5, 3));
    assert_eq!(summary.entropies.len(), 5);
    let ln3 = 3.0f64.ln();
    for r in 0..5 {
        let row_sum: f64 = summary.mean_probs.row(r).iter().sum();
        assert!((row_sum - 1.0).abs() < 1e-9, "row {r} sums to {row_sum}");
        assert!(summary.entropies[r] >= 0.0 && summary.entropies[r] <= ln3 + 1e-12);
    }
}

#[test]
fn prediction_restores_the_mode_on_success_and_failure() {
    let x = Rng::new(12).uniform(-1.0, 1.0, 2, 8).unwrap();
    let mut model = mk_model(0.1, Ablation::FULL, 13);

    model.set_mode(ModelMode::Train);
    mc_dropout_predict(&mut model, &x, 2, &mut Rng::new(4), false, false).unwrap();
    assert!(matches!(model.mode(), ModelMode::Train));

    model.set_mode(ModelMode::Eval);
    let wrong_width = Rng::new(12).uniform(-1.0, 1.0, 2, 7).unwrap();
    assert!(mc_dropout_predict(&mut model, &wrong_width, 2, &mut Rng::new(4), false, false)
        .is_err());
    assert!(matches!(model.mode(), ModelMode::Eval));
}

#[test]
fn prediction_uses_running_statistics_not_batch_statistics() {
    // Feed a batch whose statistics sit far from the fresh running values
    // (mean 0, variance 1). A p = 0 model isolates the normalization path:
    // the MC pass must match an eval forward bitwise and differ from a
    // train-mode forward, which would whiten with the batch's own moments.
    let x = Rng::new(14).uniform(4.0, 6.0, 4, 8).unwrap();
    let mut model = mk_model(0.0, Ablation::FULL, 15);

    let summary =
        mc_dropout_predict(&mut model, &x, 1, &mut Rng::new(5), false, false).unwrap();

    model.set_mode(ModelMode::Eval);
    let eval_probs = softmax_rows(&model.forward(&x, &mut Rng::new(0)).unwrap());
    assert_tensors_bitwise(&summary.mean_probs, &eval_probs, "mc pass vs eval");

    let mut train_twin = mk_model(0.0, Ablation::FULL, 15);
    train_twin.set_mode(ModelMode::Train);
    let train_probs = softmax_rows(&train_twin.forward(&x, &mut Rng::new(5)).unwrap());
    let max_gap = summary
        .mean_probs
        .data()
        .iter()
        .zip(train_probs.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(
        max_gap > 1e-6,
        "batch statistics should have changed the outputs, gap {max_gap}"
    );
}

#[test]
fn long_runs_with_different_seeds_agree() {
    // Two independent 512-pass estimates of the same predictive mean stay
    // within 0.05 per entry of each other.
    let x = Rng::new(16).uniform(-1.0, 1.0, 4, 8).unwrap();
    let mut model = mk_model(0.2, Ablation::FULL, 17);

    let a = mc_dropout_predict(&mut model, &x, 512, &mut Rng::new(100), false, false).unwrap();
    let b = mc_dropout_predict(&mut model, &x, 512, &mut Rng::new(200), false, false).unwrap();
    let max_gap = a
        .mean_probs
        .data()
        .iter()
        .zip(b.mean_probs.data())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0f64, f64::max);
    assert!(max_gap < 0.05, "512-pass means differ by {max_gap}");

    // And the same seed reproduces the estimate bitwise.
    let c = mc_dropout_predict(&mut model, &x, 512, &mut Rng::new(100), false, false).unwrap();
    assert_tensors_bitwise(&a.mean_probs, &c.mean_probs, "seeded replay");
}
