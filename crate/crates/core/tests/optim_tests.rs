//! Optimizer oracles: the Kaiming bound and variance, hand-stepped AdamW
//! updates with bias correction, exact decoupled decay with dyadic
//! constants, equivalence with an inline reference Adam at zero decay,
//! scheduler arithmetic, and a convergence smoke test.

mod common;

use common::{assert_close, random_tensor};
use icmlp::error::Error;
use icmlp::model::{build_model, Ablation, IcMlpModel};
use icmlp::optim::{kaiming_uniform_init, AdamW, ExponentialLr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use icmlp::rng::Rng;

fn tiny_model(seed: u64) -> IcMlpModel {
    build_model(8, 2, 1, 1, 0.05, Ablation::FULL, &mut Rng::new(seed)).unwrap()
}

/// Writes `value` into every gradient buffer of the model.
fn set_all_grads(model: &mut IcMlpModel, value: f64) {
    model.for_each_param(|_, g| g.fill(value));
}

/// Flattened copies of every parameter tensor.
fn snapshot(model: &IcMlpModel) -> Vec<f64> {
    let mut out = Vec::new();
    model.for_each_param_ref(|p| out.extend_from_slice(p.data()));
    out
}

// ------------------------------------------------------ initialization

#[test]
fn kaiming_bound_fan_in_six_is_one() {
    let mut rng = Rng::new(1);
    let w = kaiming_uniform_init(&mut rng, 6, 20, 20).unwrap();
    assert!(w.data().iter().all(|&v| v.abs() < 1.0));
}

#[test]
fn kaiming_bound_fan_in_512() {
    let expected = 0.10825317547305482; // sqrt(6/512)
    assert_close((6.0f64 / 512.0).sqrt(), expected, 1e-15, "bound formula");
    let mut rng = Rng::new(2);
    let w = kaiming_uniform_init(&mut rng, 512, 100, 100).unwrap();
    let max = w.data().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    assert!(max < expected, "max |entry| {max} exceeds the bound");
    // A 10^4-sample max should come close to the bound from below.
    assert!(max > expected * 0.99, "max |entry| {max} suspiciously far from the bound");
}

#[test]
fn kaiming_sample_variance_matches_uniform_law() {
    // Var(Uniform(-b, b)) = b^2 / 3; 10^5 samples put the estimate well
    // within 5%.
    let mut rng = Rng::new(3);
    let w = kaiming_uniform_init(&mut rng, 512, 1000, 100).unwrap();
    let n = 100_000.0;
    let mean = w.data().iter().sum::<f64>() / n;
    let var = w.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let expected = 6.0 / 512.0 / 3.0;
    assert!(
        (var - expected).abs() < 0.05 * expected,
        "variance {var} vs expected {expected}"
    );
}

#[test]
fn kaiming_rejects_zero_fan_in_and_is_seeded() {
    assert!(matches!(
        kaiming_uniform_init(&mut Rng::new(1), 0, 2, 2),
        Err(Error::Parameter(_))
    ));
    let a = kaiming_uniform_init(&mut Rng::new(9), 64, 4, 4).unwrap();
    let b = kaiming_uniform_init(&mut Rng::new(9), 64, 4, 4).unwrap();
    assert_eq!(a.data(), b.data(), "same seed, same draw");
}

// --------------------------------------------------------------- adamw

#[test]
fn adamw_first_step_hand_oracle() {
    // w = 1, g = 1, lr = 0.1, decay 0: m = 0.1, v = 0.001, and bias
    // correction makes m_hat = v_hat = 1, so w' = 1 - 0.1/(1 + 1e-8).
    let mut model = tiny_model(4);
    model.for_each_param(|p, _| p.fill(1.0));
    set_all_grads(&mut model, 1.0);
    let mut opt = AdamW::new(&model, 0.1, 0.0).unwrap();
    opt.step(&mut model).unwrap();

    let expected = 1.0 - 0.1 / (1.0 + ADAM_EPS);
    model.for_each_param(|p, _| {
        for &v in p.data() {
            assert_close(v, expected, 1e-15, "one-step update");
            assert_close(v, 0.9, 1e-7, "approximate value");
        }
    });
    assert_eq!(opt.steps_taken(), 1);
}

#[test]
fn adamw_zero_gradient_zero_decay_is_a_fixed_point() {
    let mut model = tiny_model(5);
    let before = snapshot(&model);
    set_all_grads(&mut model, 0.0);
    let mut opt = AdamW::new(&model, 0.05, 0.0).unwrap();
    for _ in 0..3 {
        opt.step(&mut model).unwrap();
    }
    let after = snapshot(&model);
    assert!(
        before
            .iter()
            .zip(&after)
            .all(|(a, b)| a.to_bits() == b.to_bits()),
        "zero gradient and zero decay must not move parameters"
    );
    assert_eq!(opt.steps_taken(), 3);
}

#[test]
fn adamw_pure_decay_is_exact_with_dyadic_constants() {
    // lr = 0.5, decay = 0.25: the shrink factor 1 - lr*wd = 0.875 is a
    // dyadic rational, so every step is one correctly-rounded multiply
    // and the trajectory can be asserted bitwise.
    let mut model = tiny_model(6);
    set_all_grads(&mut model, 0.0);
    let mut opt = AdamW::new(&model, 0.5, 0.25).unwrap();
    let mut expected = snapshot(&model);
    for step in 0..10 {
        opt.step(&mut model).unwrap();
        for e in &mut expected {
            *e *= 0.875;
        }
        let actual = snapshot(&model);
        assert!(
            expected
                .iter()
                .zip(&actual)
                .all(|(a, b)| a.to_bits() == b.to_bits()),
            "step {step}: decay trajectory diverged from 0.875^k"
        );
    }
}

#[test]
fn adamw_decays_batchnorm_parameters_too() {
    let mut model = tiny_model(7);
    set_all_grads(&mut model, 0.0);
    let mut opt = AdamW::new(&model, 0.5, 0.25).unwrap();
    opt.step(&mut model).unwrap();
    let (res, down) = &model.pairs()[0];
    let gamma = res.ic2.as_ref().unwrap().bn.gamma();
    assert!(
        gamma.data().iter().all(|&v| v == 0.875),
        "fresh gamma 1.0 must shrink to 0.875 under decay"
    );
    assert!(down.ic.as_ref().unwrap().bn.gamma().data().iter().all(|&v| v == 0.875));
    // Running statistics are state, not parameters: untouched.
    assert!(res.ic2.as_ref().unwrap().bn.running_var().data().iter().all(|&v| v == 1.0));
}

#[test]
fn adamw_with_zero_decay_matches_inline_adam_reference() {
    let mut model = tiny_model(8);
    let mut opt = AdamW::new(&model, 0.01, 0.0).unwrap();

    // Reference Adam over flattened parameters, straight from the update
    // equations, bias correction included.
    let mut ref_p = snapshot(&model);
    let mut ref_m = vec![0.0; ref_p.len()];
    let mut ref_v = vec![0.0; ref_p.len()];
    let mut grad_rng = Rng::new(99);

    for t in 1..=7u32 {
        let grads: Vec<f64> = (0..ref_p.len()).map(|_| grad_rng.next_f64() - 0.5).collect();
        // Reference update.
        let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
        for i in 0..ref_p.len() {
            ref_m[i] = ADAM_BETA1 * ref_m[i] + (1.0 - ADAM_BETA1) * grads[i];
            ref_v[i] = ADAM_BETA2 * ref_v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
            let m_hat = ref_m[i] / bc1;
            let v_hat = ref_v[i] / bc2;
            ref_p[i] -= 0.01 * (m_hat / (v_hat.sqrt() + ADAM_EPS));
        }
        // Optimizer under test, fed the same gradients.
        let mut k = 0;
        model.for_each_param(|_, g| {
            for gv in g.data_mut() {
                *gv = grads[k];
                k += 1;
            }
        });
        opt.step(&mut model).unwrap();

        let actual = snapshot(&model);
        for (i, (a, r)) in actual.iter().zip(&ref_p).enumerate() {
            assert!(
                common::rel_err(*a, *r) < 1e-12,
                "step {t}, flat param {i}: {a} vs reference {r}"
            );
        }
    }
}

#[test]
fn adamw_decoupling_keeps_decay_out_of_the_moments() {
    // One step with nonzero gradient and decay: the update must be the
    // zero-decay update plus lr*wd*param, not Adam on g + wd*param.
    let mut model = tiny_model(9);
    model.for_each_param(|p, _| p.fill(2.0));
    set_all_grads(&mut model, 0.3);
    let mut opt = AdamW::new(&model, 0.1, 0.5).unwrap();
    opt.step(&mut model).unwrap();

    let adaptive = 0.3 / ((0.3f64 * 0.3).sqrt() + ADAM_EPS); // m_hat/(sqrt(v_hat)+eps)
    let expected = 2.0 - 0.1 * (adaptive + 0.5 * 2.0);
    model.for_each_param(|p, _| {
        for &v in p.data() {
            assert_close(v, expected, 1e-12, "decoupled update");
        }
    });
}

#[test]
fn adamw_rejects_bad_hyperparameters() {
    let model = tiny_model(10);
    assert!(AdamW::new(&model, -0.1, 0.0).is_err());
    assert!(AdamW::new(&model, f64::NAN, 0.0).is_err());
    assert!(AdamW::new(&model, 0.1, -1e-9).is_err());
    assert!(AdamW::with_hyperparams(&model, 0.1, 0.0, 1.0, 0.999, 1e-8).is_err());
    assert!(AdamW::with_hyperparams(&model, 0.1, 0.0, 0.9, -0.1, 1e-8).is_err());
    assert!(AdamW::new(&model, 0.0, 0.0).is_ok(), "zero lr is legal");
}

#[test]
fn adamw_rejects_a_different_model() {
    let small = tiny_model(11);
    let mut big = build_model(16, 2, 2, 2, 0.05, Ablation::FULL, &mut Rng::new(12)).unwrap();
    let mut opt = AdamW::new(&small, 0.1, 0.0).unwrap();
    set_all_grads(&mut big, 0.0);
    assert!(matches!(opt.step(&mut big), Err(Error::State(_))));
}

#[test]
fn adamw_set_lr_takes_effect() {
    let mut model = tiny_model(13);
    model.for_each_param(|p, _| p.fill(1.0));
    set_all_grads(&mut model, 0.0);
    let mut opt = AdamW::new(&model, 0.5, 0.25).unwrap();
    assert_eq!(opt.lr(), 0.5);
    opt.set_lr(0.0);
    opt.step(&mut model).unwrap();
    model.for_each_param(|p, _| assert!(p.data().iter().all(|&v| v == 1.0)));
}

#[test]
fn adamw_drives_a_quadratic_to_zero() {
    // Loss 1/2 sum(w^2) over every parameter: gradient is the parameter
    // itself. AdamW at lr 0.05 should crush all weights below 1e-3.
    let mut model = tiny_model(14);
    let mut opt = AdamW::new(&model, 0.05, 0.0).unwrap();
    for _ in 0..500 {
        model.for_each_param(|p, g| {
            g.data_mut().copy_from_slice(p.data());
        });
        opt.step(&mut model).unwrap();
    }
    let worst = snapshot(&model).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(worst < 1e-3, "largest |parameter| after 500 steps: {worst}");
}

// ----------------------------------------------------------- scheduler

#[test]
fn scheduler_matches_hand_products() {
    let sched = ExponentialLr::new(2e-2, 6e-2).unwrap();
    assert_close(sched.lr_at_epoch(0), 2e-2, 1e-15, "epoch 0 is the initial rate");
    assert_close(sched.lr_at_epoch(1), 1.2e-3, 1e-12, "one decay step");
    assert_close(sched.lr_at_epoch(2), 7.2e-5, 1e-12, "two decay steps");

    let age = ExponentialLr::new(2e-3, 0.4).unwrap();
    assert_close(age.lr_at_epoch(2), 3.2e-4, 1e-12, "0.4^2 decay");
}

#[test]
fn scheduler_is_stateless_and_monotone() {
    let sched = ExponentialLr::new(0.1, 0.7).unwrap();
    let forward: Vec<f64> = (0..10).map(|e| sched.lr_at_epoch(e)).collect();
    let backward: Vec<f64> = (0..10).rev().map(|e| sched.lr_at_epoch(e)).collect();
    assert_eq!(
        forward,
        backward.into_iter().rev().collect::<Vec<_>>(),
        "query order must not matter"
    );
    assert!(forward.windows(2).all(|w| w[1] < w[0]), "strictly decreasing for gamma < 1");

    let flat = ExponentialLr::new(0.1, 1.0).unwrap();
    assert!((0..10).all(|e| flat.lr_at_epoch(e) == 0.1), "gamma 1 never decays");
}

#[test]
fn scheduler_rejects_bad_parameters() {
    assert!(ExponentialLr::new(0.1, 0.0).is_err());
    assert!(ExponentialLr::new(0.1, 1.2).is_err());
    assert!(ExponentialLr::new(0.1, -0.5).is_err());
    assert!(ExponentialLr::new(-0.1, 0.5).is_err());
    assert!(ExponentialLr::new(f64::NAN, 0.5).is_err());
}

// A buffer against accidental edits to the shared constants.
#[test]
fn adam_constants_are_the_cited_defaults() {
    assert_eq!(ADAM_BETA1, 0.9);
    assert_eq!(ADAM_BETA2, 0.999);
    assert_eq!(ADAM_EPS, 1e-8);
    let _ = random_tensor(&mut Rng::new(0), 1, 1, -1.0, 1.0); // keep helper linked
}
