//! Weight initialization, AdamW, and the per-epoch learning-rate schedule.

use crate::error::{Error, Result};
use crate::model::IcMlpModel;
use crate::rng::Rng;
use crate::tensor::Tensor2D;

/// Kaiming-uniform draw: `Uniform(-b, b)` with `b = sqrt(6 / fan_in)`,
/// the relu-gain fan-in bound.
pub fn kaiming_uniform_init(
    rng: &mut Rng,
    fan_in: usize,
    rows: usize,
    cols: usize,
) -> Result<Tensor2D> {
    if fan_in == 0 {
        return Err(Error::Parameter(
            "kaiming init needs a positive fan_in".into(),
        ));
    }
    let bound = (6.0 / fan_in as f64).sqrt();
    rng.uniform(-bound, bound, rows, cols)
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// AdamW: Adam moment estimates with bias correction, plus weight decay
/// applied directly to the parameter instead of through the gradient:
///
///   m <- b1 m + (1 - b1) g          v <- b2 v + (1 - b2) g^2
///   param <- param - lr * ( m_hat / (sqrt(v_hat) + eps) + wd * param )
///
/// With decay zero this is exactly Adam; with zero gradients the adaptive
/// term vanishes and each step multiplies the parameter by (1 - lr * wd).
#[derive(Debug, Clone)]
pub struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: u64,
    m: Vec<Tensor2D>,
    v: Vec<Tensor2D>,
}

impl AdamW {
    pub fn new(model: &IcMlpModel, lr: f64, weight_decay: f64) -> Result<Self> {
        Self::with_hyperparams(model, lr, weight_decay, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)
    }

    pub fn with_hyperparams(
        model: &IcMlpModel,
        lr: f64,
        weight_decay: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning rate must be finite and >= 0, got {lr}"
            )));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::Parameter(format!(
                "weight decay must be finite and >= 0, got {weight_decay}"
            )));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Parameter(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        let mut m = Vec::new();
        model.for_each_param_ref(|p| m.push(Tensor2D::zeros(p.rows(), p.cols())));
        let v = m.clone();
        Ok(AdamW {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            t: 0,
            m,
            v,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients currently stored in the model.
    /// The model must be the one the optimizer was built for.
    pub fn step(&mut self, model: &mut IcMlpModel) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (lr, b1, b2, eps, wd) = (self.lr, self.beta1, self.beta2, self.eps, self.weight_decay);
        let (m_all, v_all) = (&mut self.m, &mut self.v);
        let mut idx = 0usize;
        let mut mismatch = None;
        model.for_each_param(|p, g| {
            if mismatch.is_some() {
                return;
            }
            let Some(m) = m_all.get_mut(idx) else {
                mismatch = Some((idx, p.shape()));
                return;
            };
            if m.shape() != p.shape() {
                mismatch = Some((idx, p.shape()));
                return;
            }
            let v = &mut v_all[idx];
            idx += 1;
            let (pm, gm) = (p.data_mut(), g.data());
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pm.len() {
                let grad = gm[i];
                md[i] = b1 * md[i] + (1.0 - b1) * grad;
                vd[i] = b2 * vd[i] + (1.0 - b2) * grad * grad;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pm[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * pm[i]);
            }
        });
        if let Some((i, shape)) = mismatch {
            return Err(Error::State(format!(
                "optimizer state does not match model: parameter {i} has shape {shape:?}"
            )));
        }
        if idx != self.m.len() {
            return Err(Error::State(format!(
                "optimizer state does not match model: {} parameters, expected {}",
                idx,
                self.m.len()
            )));
        }
        Ok(())
    }
}

/// Exponential decay applied once per epoch: `lr(e) = initial * gamma^e`,
/// with epoch 0 at the initial rate. Stateless; query any epoch.
#[derive(Debug, Clone, Copy)]
pub struct ExponentialLr {
    initial_lr: f64,
    gamma: f64,
}

impl ExponentialLr {
    pub fn new(initial_lr: f64, gamma: f64) -> Result<Self> {
        if !(initial_lr >= 0.0 && initial_lr.is_finite()) {
            return Err(Error::Parameter(format!(
                "initial learning rate must be finite and >= 0, got {initial_lr}"
            )));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Parameter(format!(
                "decay factor must lie in (0, 1], got {gamma}"
            )));
        }
        Ok(ExponentialLr { initial_lr, gamma })
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.initial_lr * self.gamma.powi(epoch as i32)
    }
}
