//! Network layers with hand-derived backward passes.
//!
//! Every layer caches what its backward pass needs during forward. Backward
//! calls accumulate into gradient buffers (`+=`), so gradients survive until
//! [`zero_grads`] is called; callers that want per-batch gradients must zero
//! between steps. Calling backward without a prior train-mode forward is a
//! state error, never silent garbage.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Affine layer `y = x W^T + b` with `W: out x in`, `b: 1 x out`.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    weight: Tensor2D,
    bias: Tensor2D,
    grad_weight: Tensor2D,
    grad_bias: Tensor2D,
    input_cache: Option<Tensor2D>,
}

impl LinearLayer {
    /// Zero-initialized layer; weights are normally filled afterwards by the
    /// initializer in `optim`.
    pub fn new(in_features: usize, out_features: usize) -> Self {
        LinearLayer {
            weight: Tensor2D::zeros(out_features, in_features),
            bias: Tensor2D::zeros(1, out_features),
            grad_weight: Tensor2D::zeros(out_features, in_features),
            grad_bias: Tensor2D::zeros(1, out_features),
            input_cache: None,
        }
    }

    pub fn with_params(weight: Tensor2D, bias: Tensor2D) -> Result<Self> {
        if bias.rows() != 1 || bias.cols() != weight.rows() {
            return Err(Error::ShapeMismatch {
                op: "linear params",
                left: weight.shape(),
                right: bias.shape(),
            });
        }
        let (out_f, in_f) = weight.shape();
        Ok(LinearLayer {
            weight,
            bias,
            grad_weight: Tensor2D::zeros(out_f, in_f),
            grad_bias: Tensor2D::zeros(1, out_f),
            input_cache: None,
        })
    }

    pub fn in_features(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_features(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Tensor2D {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor2D {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut Tensor2D {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Tensor2D {
        &mut self.bias
    }

    pub fn grad_weight(&self) -> &Tensor2D {
        &self.grad_weight
    }

    pub fn grad_bias(&self) -> &Tensor2D {
        &self.grad_bias
    }

    /// Applies the affine map without caching; cannot be backpropagated.
    pub fn apply(&self, x: &Tensor2D) -> Result<Tensor2D> {
        if x.cols() != self.in_features() {
            return Err(Error::ShapeMismatch {
                op: "linear forward",
                left: x.shape(),
                right: self.weight.shape(),
            });
        }
        x.matmul_nt(&self.weight)?.add_row_broadcast(&self.bias)
    }

    pub fn forward(&mut self, x: &Tensor2D) -> Result<Tensor2D> {
        let y = self.apply(x)?;
        self.input_cache = Some(x.clone());
        Ok(y)
    }

    /// Accumulates `grad_weight += g^T x`, `grad_bias += column sums of g`,
    /// returns `grad_in = g W`.
    pub fn backward(&mut self, grad_out: &Tensor2D) -> Result<Tensor2D> {
        let x = self.input_cache.as_ref().ok_or_else(|| {
            Error::State("linear backward called before train forward".into())
        })?;
        if grad_out.shape() != (x.rows(), self.out_features()) {
            return Err(Error::ShapeMismatch {
                op: "linear backward",
                left: grad_out.shape(),
                right: (x.rows(), self.out_features()),
            });
        }
        self.grad_weight.add_assign(&grad_out.matmul_tn(x)?)?;
        self.grad_bias.add_assign(&grad_out.col_sums())?;
        grad_out.matmul(&self.weight)
    }

    pub fn zero_grads(&mut self) {
        self.grad_weight.fill(0.0);
        self.grad_bias.fill(0.0);
    }

    /// Visits (parameter, gradient) pairs: weight first, then bias.
    pub fn visit_params(&mut self, f: &mut impl FnMut(&mut Tensor2D, &mut Tensor2D)) {
        f(&mut self.weight, &mut self.grad_weight);
        f(&mut self.bias, &mut self.grad_bias);
    }

    pub fn visit_params_ref(&self, f: &mut impl FnMut(&Tensor2D)) {
        f(&self.weight);
        f(&self.bias);
    }
}

#[derive(Debug, Clone)]
struct BnCache {
    x_hat: Tensor2D,
    inv_std: Tensor2D,
}

/// Batch normalization over the batch dimension, one statistic per feature.
///
/// Train mode normalizes with the biased batch variance and folds the batch
/// statistics into running estimates as
/// `running <- (1 - momentum) * running + momentum * batch`,
/// pushing the unbiased variance into `running_var`. Eval mode normalizes
/// with the running estimates and never mutates state.
#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    gamma: Tensor2D,
    beta: Tensor2D,
    running_mean: Tensor2D,
    running_var: Tensor2D,
    eps: f64,
    momentum: f64,
    grad_gamma: Tensor2D,
    grad_beta: Tensor2D,
    cache: Option<BnCache>,
}

pub const BN_DEFAULT_EPS: f64 = 1e-5;
pub const BN_DEFAULT_MOMENTUM: f64 = 0.1;

impl BatchNormLayer {
    pub fn new(n_features: usize) -> Self {
        Self::with_options(n_features, BN_DEFAULT_EPS, BN_DEFAULT_MOMENTUM)
    }

    /// Fresh layer: gamma 1, beta 0, running mean 0, running variance 1.
    pub fn with_options(n_features: usize, eps: f64, momentum: f64) -> Self {
        BatchNormLayer {
            gamma: Tensor2D::full(1, n_features, 1.0),
            beta: Tensor2D::zeros(1, n_features),
            running_mean: Tensor2D::zeros(1, n_features),
            running_var: Tensor2D::full(1, n_features, 1.0),
            eps,
            momentum,
            grad_gamma: Tensor2D::zeros(1, n_features),
            grad_beta: Tensor2D::zeros(1, n_features),
            cache: None,
        }
    }

    pub fn n_features(&self) -> usize {
        self.gamma.cols()
    }

    pub fn gamma(&self) -> &Tensor2D {
        &self.gamma
    }

    pub fn beta(&self) -> &Tensor2D {
        &self.beta
    }

    pub fn gamma_mut(&mut self) -> &mut Tensor2D {
        &mut self.gamma
    }

    pub fn beta_mut(&mut self) -> &mut Tensor2D {
        &mut self.beta
    }

    pub fn running_mean(&self) -> &Tensor2D {
        &self.running_mean
    }

    pub fn running_var(&self) -> &Tensor2D {
        &self.running_var
    }

    pub fn grad_gamma(&self) -> &Tensor2D {
        &self.grad_gamma
    }

    pub fn grad_beta(&self) -> &Tensor2D {
        &self.grad_beta
    }

    pub(crate) fn state_mut(
        &mut self,
    ) -> (&mut Tensor2D, &mut Tensor2D, &mut Tensor2D, &mut Tensor2D) {
        (
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        )
    }

    pub fn forward(&mut self, x: &Tensor2D, mode: Mode) -> Result<Tensor2D> {
        if x.cols() != self.n_features() {
            return Err(Error::ShapeMismatch {
                op: "batchnorm forward",
                left: x.shape(),
                right: self.gamma.shape(),
            });
        }
        match mode {
            Mode::Train => self.forward_train(x),
            Mode::Eval => {
                // Eval normalizes against running statistics and must not
                // leave a stale cache a later backward could pick up.
                self.cache = None;
                let n = self.n_features();
                let mut y = x.clone();
                for r in 0..y.rows() {
                    for c in 0..n {
                        let x_hat = (x.get(r, c) - self.running_mean.get(0, c))
                            / (self.running_var.get(0, c) + self.eps).sqrt();
                        y.set(r, c, self.gamma.get(0, c) * x_hat + self.beta.get(0, c));
                    }
                }
                Ok(y)
            }
        }
    }

    fn forward_train(&mut self, x: &Tensor2D) -> Result<Tensor2D> {
        let b = x.rows();
        if b < 2 {
            return Err(Error::BatchTooSmall {
                got: b,
                context: "batch statistics need at least 2 rows",
            });
        }
        let n = self.n_features();
        let inv_b = 1.0 / b as f64;
        let mut mean = vec![0.0; n];
        for r in 0..b {
            for (c, m) in mean.iter_mut().enumerate() {
                *m += x.get(r, c);
            }
        }
        for m in &mut mean {
            *m *= inv_b;
        }
        // Biased variance normalizes the batch; the unbiased version feeds
        // the running estimate.
        let mut var = vec![0.0; n];
        for r in 0..b {
            for (c, v) in var.iter_mut().enumerate() {
                let d = x.get(r, c) - mean[c];
                *v += d * d;
            }
        }
        for v in &mut var {
            *v *= inv_b;
        }

        let mut inv_std = Tensor2D::zeros(1, n);
        for (c, v) in var.iter().enumerate() {
            inv_std.set(0, c, 1.0 / (v + self.eps).sqrt());
        }
        let mut x_hat = Tensor2D::zeros(b, n);
        let mut y = Tensor2D::zeros(b, n);
        for r in 0..b {
            for (c, m) in mean.iter().enumerate() {
                let xh = (x.get(r, c) - m) * inv_std.get(0, c);
                x_hat.set(r, c, xh);
                y.set(r, c, self.gamma.get(0, c) * xh + self.beta.get(0, c));
            }
        }

        let unbias = b as f64 / (b as f64 - 1.0);
        for c in 0..n {
            let rm = (1.0 - self.momentum) * self.running_mean.get(0, c) + self.momentum * mean[c];
            let rv = (1.0 - self.momentum) * self.running_var.get(0, c)
                + self.momentum * (var[c] * unbias);
            self.running_mean.set(0, c, rm);
            self.running_var.set(0, c, rv);
        }

        self.cache = Some(BnCache { x_hat, inv_std });
        Ok(y)
    }

    /// Backward through the train-mode normalization, including the paths
    /// through the batch mean and variance:
    ///
    ///   grad_in = inv_std / B * (B * g_hat - sum_B(g_hat) - x_hat * sum_B(g_hat * x_hat))
    ///
    /// with `g_hat = grad_out * gamma`, all sums per feature.
    pub fn backward(&mut self, grad_out: &Tensor2D) -> Result<Tensor2D> {
        let cache = self.cache.as_ref().ok_or_else(|| {
            Error::State("batchnorm backward called before train forward".into())
        })?;
        let (b, n) = cache.x_hat.shape();
        if grad_out.shape() != (b, n) {
            return Err(Error::ShapeMismatch {
                op: "batchnorm backward",
                left: grad_out.shape(),
                right: (b, n),
            });
        }

        let mut sum_g = vec![0.0; n];
        let mut sum_gx = vec![0.0; n];
        for r in 0..b {
            for c in 0..n {
                let g = grad_out.get(r, c);
                sum_g[c] += g;
                sum_gx[c] += g * cache.x_hat.get(r, c);
            }
        }
        for c in 0..n {
            let gg = self.grad_gamma.get(0, c) + sum_gx[c];
            let gb = self.grad_beta.get(0, c) + sum_g[c];
            self.grad_gamma.set(0, c, gg);
            self.grad_beta.set(0, c, gb);
        }

        let inv_b = 1.0 / b as f64;
        let mut grad_in = Tensor2D::zeros(b, n);
        for r in 0..b {
            for c in 0..n {
                let g_hat = grad_out.get(r, c) * self.gamma.get(0, c);
                let term = b as f64 * g_hat
                    - self.gamma.get(0, c) * sum_g[c]
                    - cache.x_hat.get(r, c) * self.gamma.get(0, c) * sum_gx[c];
                grad_in.set(r, c, cache.inv_std.get(0, c) * inv_b * term);
            }
        }
        Ok(grad_in)
    }

    pub fn zero_grads(&mut self) {
        self.grad_gamma.fill(0.0);
        self.grad_beta.fill(0.0);
    }

    /// Visits (parameter, gradient) pairs: gamma first, then beta.
    /// Running statistics are state, not parameters, and are not visited.
    pub fn visit_params(&mut self, f: &mut impl FnMut(&mut Tensor2D, &mut Tensor2D)) {
        f(&mut self.gamma, &mut self.grad_gamma);
        f(&mut self.beta, &mut self.grad_beta);
    }

    pub fn visit_params_ref(&self, f: &mut impl FnMut(&Tensor2D)) {
        f(&self.gamma);
        f(&self.beta);
    }
}

/// Inverted dropout: train output is `x * mask / (1 - p)` so evaluation
/// needs no rescaling and is exactly the identity.
#[derive(Debug, Clone)]
pub struct DropoutLayer {
    p: f64,
    mask: Option<Tensor2D>,
}

impl DropoutLayer {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!(
                "dropout probability must lie in [0, 1), got {p}"
            )));
        }
        Ok(DropoutLayer { p, mask: None })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn forward(&mut self, x: &Tensor2D, mode: Mode, rng: &mut Rng) -> Result<Tensor2D> {
        match mode {
            Mode::Eval => {
                self.mask = None;
                Ok(x.clone())
            }
            Mode::Train => {
                let mask = rng.bernoulli_mask(1.0 - self.p, x.rows(), x.cols())?;
                let scale = 1.0 / (1.0 - self.p);
                let y = x.zip_map(&mask, |v, m| v * m * scale)?;
                self.mask = Some(mask);
                Ok(y)
            }
        }
    }

    pub fn backward(&self, grad_out: &Tensor2D) -> Result<Tensor2D> {
        let mask = self.mask.as_ref().ok_or_else(|| {
            Error::State("dropout backward called before train forward".into())
        })?;
        let scale = 1.0 / (1.0 - self.p);
        grad_out.zip_map(mask, |g, m| g * m * scale)
    }
}

/// Rectified linear unit. The subgradient at exactly zero is zero.
#[derive(Debug, Clone, Default)]
pub struct ReluLayer {
    input_cache: Option<Tensor2D>,
}

impl ReluLayer {
    pub fn new() -> Self {
        ReluLayer::default()
    }

    pub fn forward(&mut self, x: &Tensor2D) -> Tensor2D {
        let y = x.map(|v| v.max(0.0));
        self.input_cache = Some(x.clone());
        y
    }

    pub fn backward(&self, grad_out: &Tensor2D) -> Result<Tensor2D> {
        let x = self
            .input_cache
            .as_ref()
            .ok_or_else(|| Error::State("relu backward called before forward".into()))?;
        x.zip_map(grad_out, |v, g| if v > 0.0 { g } else { 0.0 })
    }
}

/// Row-wise softmax with max subtraction, safe for extreme logits.
pub fn softmax_rows(logits: &Tensor2D) -> Tensor2D {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row_max = logits
            .row(r)
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..out.cols() {
            let e = (logits.get(r, c) - row_max).exp();
            out.set(r, c, e);
            sum += e;
        }
        for c in 0..out.cols() {
            out.set(r, c, out.get(r, c) / sum);
        }
    }
    out
}

/// Mean cross-entropy of softmax(logits) against integer labels, and the
/// gradient with respect to the logits, `(softmax - onehot) / B`.
pub fn softmax_cross_entropy(logits: &Tensor2D, labels: &[usize]) -> Result<(f64, Tensor2D)> {
    let (b, n_classes) = logits.shape();
    if labels.len() != b {
        return Err(Error::ShapeMismatch {
            op: "softmax_cross_entropy",
            left: logits.shape(),
            right: (labels.len(), 1),
        });
    }
    if b == 0 {
        return Err(Error::Parameter(
            "softmax_cross_entropy on an empty batch".into(),
        ));
    }
    for (row, &label) in labels.iter().enumerate() {
        if label >= n_classes {
            return Err(Error::LabelOutOfRange {
                label,
                n_classes,
                at: Some(row),
            });
        }
    }
    let probs = softmax_rows(logits);
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (r, &label) in labels.iter().enumerate() {
        // ln of a max-subtracted softmax entry never sees a zero argument
        // for the true class unless that logit is -inf away from the max.
        loss -= probs.get(r, label).ln();
        grad.set(r, label, grad.get(r, label) - 1.0);
    }
    Ok((loss * inv_b, grad.scale(inv_b)))
}

/// Verifies additivity and homogeneity of the layer's map on the given
/// probes, to relative tolerance 1e-9. Meaningful for layers whose bias is
/// zero; shapes must conform (panics otherwise, like any misuse of probes).
pub fn check_linearity(layer: &LinearLayer, x: &Tensor2D, y: &Tensor2D, a: f64) -> bool {
    let tol = 1e-9;
    let fx = layer.apply(x).expect("check_linearity: x shape");
    let fy = layer.apply(y).expect("check_linearity: y shape");
    let sum = x.add(y).expect("check_linearity: probe shapes");
    let f_sum = layer.apply(&sum).expect("check_linearity: x+y shape");
    let additive = tensors_close_rel(&f_sum, &fx.add(&fy).unwrap(), tol);
    let f_ax = layer.apply(&x.scale(a)).expect("check_linearity: ax shape");
    let homogeneous = tensors_close_rel(&f_ax, &fx.scale(a), tol);
    additive && homogeneous
}

fn tensors_close_rel(a: &Tensor2D, b: &Tensor2D, tol: f64) -> bool {
    crate::tensor::tensors_close(a, b, tol)
}
