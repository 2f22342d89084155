//! The network: residual blocks alternating with downsampling blocks, each
//! linear layer fed through a whitening stage (batch norm then dropout),
//! finished by a bare linear head. The first residual block takes raw inputs,
//! so it has no leading whitening stage.
//!
//! Widths halve at every downsampling block: an `input_dim`-wide input and
//! `n` block pairs give the chain `D -> D -> D/2 -> D/2 -> D/4 -> ...`, and
//! the head maps `D / 2^n` to `n_classes`. Softmax lives in the loss, not
//! here; the head emits raw logits.

use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::{BatchNormLayer, DropoutLayer, LinearLayer, Mode, ReluLayer};
use crate::optim::kaiming_uniform_init;
use crate::rng::Rng;
use crate::tensor::Tensor2D;

/// Which structural pieces are removed. `no_ic` removes batch norm and
/// dropout together; `no_dropout` removes only dropout; `no_skip` disables
/// the residual connections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablation {
    pub no_dropout: bool,
    pub no_ic: bool,
    pub no_skip: bool,
}

impl Ablation {
    pub const FULL: Ablation = Ablation {
        no_dropout: false,
        no_ic: false,
        no_skip: false,
    };

    pub fn has_ic(&self) -> bool {
        !self.no_ic
    }

    /// Dropout layers exist only when the whole whitening stage does.
    pub fn has_dropout(&self) -> bool {
        !self.no_ic && !self.no_dropout
    }

    pub fn has_skip(&self) -> bool {
        !self.no_skip
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.no_dropout {
            parts.push("no_dropout");
        }
        if self.no_ic {
            parts.push("no_ic");
        }
        if self.no_skip {
            parts.push("no_skip");
        }
        if parts.is_empty() {
            "full".to_string()
        } else {
            parts.join("+")
        }
    }
}

/// The five ablation variants compared in the sweep.
pub fn standard_variants() -> Vec<Ablation> {
    vec![
        Ablation::FULL,
        Ablation {
            no_dropout: true,
            ..Ablation::FULL
        },
        Ablation {
            no_ic: true,
            ..Ablation::FULL
        },
        Ablation {
            no_skip: true,
            ..Ablation::FULL
        },
        Ablation {
            no_ic: true,
            no_skip: true,
            ..Ablation::FULL
        },
    ]
}

/// Forward-pass regime.
///
/// `Train` uses batch statistics and stochastic dropout; `Eval` uses running
/// statistics and the identity for dropout; `McDropout` keeps dropout
/// stochastic while normalizing with running statistics, which is the
/// uncertainty-sampling regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelMode {
    Train,
    Eval,
    McDropout,
}

fn bn_mode(mode: ModelMode) -> Mode {
    match mode {
        ModelMode::Train => Mode::Train,
        ModelMode::Eval | ModelMode::McDropout => Mode::Eval,
    }
}

fn dropout_mode(mode: ModelMode) -> Mode {
    match mode {
        ModelMode::Train | ModelMode::McDropout => Mode::Train,
        ModelMode::Eval => Mode::Eval,
    }
}

/// Whitening stage in front of a linear layer: batch norm, then dropout.
#[derive(Debug, Clone)]
pub struct IcLayer {
    pub bn: BatchNormLayer,
    pub dropout: Option<DropoutLayer>,
}

impl IcLayer {
    fn new(width: usize, dropout_p: f64, with_dropout: bool, eps: f64, momentum: f64) -> Result<Self> {
        Ok(IcLayer {
            bn: BatchNormLayer::with_options(width, eps, momentum),
            dropout: if with_dropout {
                Some(DropoutLayer::new(dropout_p)?)
            } else {
                None
            },
        })
    }

    fn forward(&mut self, x: &Tensor2D, mode: ModelMode, rng: &mut Rng) -> Result<Tensor2D> {
        let y = self.bn.forward(x, bn_mode(mode))?;
        match &mut self.dropout {
            Some(d) => d.forward(&y, dropout_mode(mode), rng),
            None => Ok(y),
        }
    }

    fn backward(&mut self, grad_out: &Tensor2D) -> Result<Tensor2D> {
        match &self.dropout {
            Some(d) => self.bn.backward(&d.backward(grad_out)?),
            None => self.bn.backward(grad_out),
        }
    }
}

/// Width-preserving block
/// `y = relu(W2 * drop(bn(relu(W1 * drop(bn(x)) + b1))) + b2 + x)`.
/// The skip joins before the final relu. `leading_ic = false` drops the
/// first whitening stage (used for the block that reads raw inputs).
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub ic1: Option<IcLayer>,
    pub fc1: LinearLayer,
    pub relu1: ReluLayer,
    pub ic2: Option<IcLayer>,
    pub fc2: LinearLayer,
    pub relu2: ReluLayer,
    pub skip: bool,
    width: usize,
}

impl ResidualBlock {
    pub fn new(
        width: usize,
        dropout_p: f64,
        leading_ic: bool,
        ablation: Ablation,
        eps: f64,
        momentum: f64,
    ) -> Result<Self> {
        if width == 0 {
            return Err(Error::Config("residual block width must be positive".into()));
        }
        let make_ic = |enabled: bool| -> Result<Option<IcLayer>> {
            Ok(if enabled && ablation.has_ic() {
                Some(IcLayer::new(
                    width,
                    dropout_p,
                    ablation.has_dropout(),
                    eps,
                    momentum,
                )?)
            } else {
                None
            })
        };
        Ok(ResidualBlock {
            ic1: make_ic(leading_ic)?,
            fc1: LinearLayer::new(width, width),
            relu1: ReluLayer::new(),
            ic2: make_ic(true)?,
            fc2: LinearLayer::new(width, width),
            relu2: ReluLayer::new(),
            skip: ablation.has_skip(),
            width,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn init_weights(&mut self, rng: &mut Rng) -> Result<()> {
        init_linear(&mut self.fc1, rng)?;
        init_linear(&mut self.fc2, rng)
    }

    pub fn forward(&mut self, x: &Tensor2D, mode: ModelMode, rng: &mut Rng) -> Result<Tensor2D> {
        let a = match &mut self.ic1 {
            Some(ic) => ic.forward(x, mode, rng)?,
            None => x.clone(),
        };
        let b = self.fc1.forward(&a)?;
        let c = self.relu1.forward(&b);
        let d = match &mut self.ic2 {
            Some(ic) => ic.forward(&c, mode, rng)?,
            None => c,
        };
        let e = self.fc2.forward(&d)?;
        let f = if self.skip { e.add(x)? } else { e };
        Ok(self.relu2.forward(&f))
    }

    /// Gradient splits at the skip join: one share continues down the
    /// transform path, the identical share returns via the identity path.
    pub fn backward(&mut self, grad_out: &Tensor2D) -> Result<Tensor2D> {
        let g_sum = self.relu2.backward(grad_out)?;
        let g_d = self.fc2.backward(&g_sum)?;
        let g_c = match &mut self.ic2 {
            Some(ic) => ic.backward(&g_d)?,
            None => g_d,
        };
        let g_b = self.relu1.backward(&g_c)?;
        let g_a = self.fc1.backward(&g_b)?;
        let mut g_x = match &mut self.ic1 {
            Some(ic) => ic.backward(&g_a)?,
            None => g_a,
        };
        if self.skip {
            g_x.add_assign(&g_sum)?;
        }
        Ok(g_x)
    }
}

/// Halving block `y = relu(W * drop(bn(x)) + b)` with `W: (N/2) x N`.
#[derive(Debug, Clone)]
pub struct DownsampleBlock {
    pub ic: Option<IcLayer>,
    pub fc: LinearLayer,
    pub relu: ReluLayer,
    in_width: usize,
}

impl DownsampleBlock {
    pub fn new(
        in_width: usize,
        dropout_p: f64,
        ablation: Ablation,
        eps: f64,
        momentum: f64,
    ) -> Result<Self> {
        if in_width < 2 {
            return Err(Error::Config(format!(
                "downsampling needs input width >= 2, got {in_width}"
            )));
        }
        let ic = if ablation.has_ic() {
            Some(IcLayer::new(
                in_width,
                dropout_p,
                ablation.has_dropout(),
                eps,
                momentum,
            )?)
        } else {
            None
        };
        Ok(DownsampleBlock {
            ic,
            fc: LinearLayer::new(in_width, in_width / 2),
            relu: ReluLayer::new(),
            in_width,
        })
    }

    pub fn in_width(&self) -> usize {
        self.in_width
    }

    pub fn out_width(&self) -> usize {
        self.in_width / 2
    }

    pub fn init_weights(&mut self, rng: &mut Rng) -> Result<()> {
        init_linear(&mut self.fc, rng)
    }

    pub fn forward(&mut self, x: &Tensor2D, mode: ModelMode, rng: &mut Rng) -> Result<Tensor2D> {
        let a = match &mut self.ic {
            Some(ic) => ic.forward(x, mode, rng)?,
            None => x.clone(),
        };
        let b = self.fc.forward(&a)?;
        Ok(self.relu.forward(&b))
    }

    pub fn backward(&mut self, grad_out: &Tensor2D) -> Result<Tensor2D> {
        let g_b = self.relu.backward(grad_out)?;
        let g_a = self.fc.backward(&g_b)?;
        match &mut self.ic {
            Some(ic) => ic.backward(&g_a),
            None => Ok(g_a),
        }
    }
}

/// Kaiming-uniform weights with fan-in equal to the layer input width;
/// biases stay zero.
fn init_linear(fc: &mut LinearLayer, rng: &mut Rng) -> Result<()> {
    let (out_f, in_f) = (fc.out_features(), fc.in_features());
    *fc.weight_mut() = kaiming_uniform_init(rng, in_f, out_f, in_f)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct IcMlpModel {
    input_dim: usize,
    n_classes: usize,
    dropout_p: f64,
    eps: f64,
    momentum: f64,
    ablation: Ablation,
    pairs: Vec<(ResidualBlock, DownsampleBlock)>,
    head: LinearLayer,
    mode: ModelMode,
}

/// Builds the zero-weight structure shared by fresh construction and
/// deserialization. Weight initialization is layered on top by the caller.
#[allow(clippy::too_many_arguments)]
fn build_structure(
    input_dim: usize,
    n_classes: usize,
    n_residual: usize,
    n_downsample: usize,
    dropout_p: f64,
    eps: f64,
    momentum: f64,
    ablation: Ablation,
) -> Result<IcMlpModel> {
    if n_residual != n_downsample {
        return Err(Error::Config(format!(
            "residual and downsample block counts must match, got {n_residual} and {n_downsample}"
        )));
    }
    if input_dim == 0 {
        return Err(Error::Config("input_dim must be positive".into()));
    }
    if n_classes < 2 {
        return Err(Error::Config(format!(
            "classification needs at least 2 classes, got {n_classes}"
        )));
    }
    let mut pairs = Vec::with_capacity(n_residual);
    let mut width = input_dim;
    for i in 0..n_residual {
        if width < 2 {
            return Err(Error::Config(format!(
                "width underflow: input_dim {input_dim} cannot be halved {n_downsample} times"
            )));
        }
        let res = ResidualBlock::new(width, dropout_p, i > 0, ablation, eps, momentum)?;
        let down = DownsampleBlock::new(width, dropout_p, ablation, eps, momentum)?;
        width /= 2;
        pairs.push((res, down));
    }
    Ok(IcMlpModel {
        input_dim,
        n_classes,
        dropout_p,
        eps,
        momentum,
        ablation,
        pairs,
        head: LinearLayer::new(width, n_classes),
        mode: ModelMode::Eval,
    })
}

/// Builds a randomly initialized model. Weights are drawn in forward
/// traversal order, so a seed pins the full initialization.
#[allow(clippy::too_many_arguments)]
pub fn build_model(
    input_dim: usize,
    n_classes: usize,
    n_residual: usize,
    n_downsample: usize,
    dropout_p: f64,
    ablation: Ablation,
    rng: &mut Rng,
) -> Result<IcMlpModel> {
    // Validates dropout_p even when ablations remove the dropout layers.
    let _ = DropoutLayer::new(dropout_p)?;
    let mut model = build_structure(
        input_dim,
        n_classes,
        n_residual,
        n_downsample,
        dropout_p,
        crate::layers::BN_DEFAULT_EPS,
        crate::layers::BN_DEFAULT_MOMENTUM,
        ablation,
    )?;
    for (res, down) in &mut model.pairs {
        res.init_weights(rng)?;
        down.init_weights(rng)?;
    }
    init_linear(&mut model.head, rng)?;
    Ok(model)
}

impl IcMlpModel {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_residual(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_downsample(&self) -> usize {
        self.pairs.len()
    }

    pub fn dropout_p(&self) -> f64 {
        self.dropout_p
    }

    pub fn ablation(&self) -> Ablation {
        self.ablation
    }

    pub fn mode(&self) -> ModelMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: ModelMode) {
        self.mode = mode;
    }

    pub fn pairs(&self) -> &[(ResidualBlock, DownsampleBlock)] {
        &self.pairs
    }

    pub fn pairs_mut(&mut self) -> &mut [(ResidualBlock, DownsampleBlock)] {
        &mut self.pairs
    }

    pub fn head(&self) -> &LinearLayer {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut LinearLayer {
        &mut self.head
    }

    /// True when forward passes actually sample dropout masks.
    pub fn has_stochastic_dropout(&self) -> bool {
        self.ablation.has_dropout()
    }

    /// Runs the network on a batch of rows and returns logits.
    /// Only train and MC-dropout modes draw from `rng`.
    pub fn forward(&mut self, x: &Tensor2D, rng: &mut Rng) -> Result<Tensor2D> {
        if x.cols() != self.input_dim {
            return Err(Error::ShapeMismatch {
                op: "model forward",
                left: x.shape(),
                right: (x.rows(), self.input_dim),
            });
        }
        let mode = self.mode;
        let mut h = x.clone();
        for (res, down) in &mut self.pairs {
            h = res.forward(&h, mode, rng)?;
            h = down.forward(&h, mode, rng)?;
        }
        self.head.forward(&h)
    }

    /// Backpropagates from logit gradients, accumulating parameter
    /// gradients, and returns the gradient with respect to the input.
    /// Valid only after a train-mode forward.
    pub fn backward(&mut self, grad_logits: &Tensor2D) -> Result<Tensor2D> {
        if self.mode != ModelMode::Train {
            return Err(Error::State(
                "model backward requires train mode (call set_mode(Train) and forward first)"
                    .into(),
            ));
        }
        let mut g = self.head.backward(grad_logits)?;
        for (res, down) in self.pairs.iter_mut().rev() {
            g = down.backward(&g)?;
            g = res.backward(&g)?;
        }
        Ok(g)
    }

    /// Visits (parameter, gradient) pairs in forward traversal order:
    /// per block pair, whitening gammas/betas then linear weights/biases,
    /// and the head last. Optimizer state is keyed to this order.
    pub fn for_each_param(&mut self, mut f: impl FnMut(&mut Tensor2D, &mut Tensor2D)) {
        for (res, down) in &mut self.pairs {
            if let Some(ic) = &mut res.ic1 {
                ic.bn.visit_params(&mut f);
            }
            res.fc1.visit_params(&mut f);
            if let Some(ic) = &mut res.ic2 {
                ic.bn.visit_params(&mut f);
            }
            res.fc2.visit_params(&mut f);
            if let Some(ic) = &mut down.ic {
                ic.bn.visit_params(&mut f);
            }
            down.fc.visit_params(&mut f);
        }
        self.head.visit_params(&mut f);
    }

    /// Immutable parameter walk in the same order as [`for_each_param`].
    pub fn for_each_param_ref(&self, mut f: impl FnMut(&Tensor2D)) {
        for (res, down) in &self.pairs {
            if let Some(ic) = &res.ic1 {
                ic.bn.visit_params_ref(&mut f);
            }
            res.fc1.visit_params_ref(&mut f);
            if let Some(ic) = &res.ic2 {
                ic.bn.visit_params_ref(&mut f);
            }
            res.fc2.visit_params_ref(&mut f);
            if let Some(ic) = &down.ic {
                ic.bn.visit_params_ref(&mut f);
            }
            down.fc.visit_params_ref(&mut f);
        }
        self.head.visit_params_ref(&mut f);
    }

    /// Number of trainable scalars: weights, biases, and whitening
    /// gamma/beta. Running statistics are state, not parameters.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param_ref(|t| n += t.len());
        n
    }

    pub fn zero_grads(&mut self) {
        self.for_each_param(|_, g| g.fill(0.0));
    }

    // ------------------------------------------------------------------
    // Serialization. Fixed little-endian layout:
    //   magic "ICMLP\0", version u16, input_dim u32, n_classes u32,
    //   n_residual u32, n_downsample u32, ablation u8, dropout_p f64,
    //   eps f64, momentum f64, then every state tensor as raw f64 arrays
    //   in forward traversal order. Whitening stages serialize gamma,
    //   beta, running mean, running variance; linear layers serialize
    //   weight (row-major) then bias. Array lengths are implied by the
    //   header, so the byte stream has exactly one valid reading.
    // ------------------------------------------------------------------

    pub fn save_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.state_len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.input_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_classes as u32).to_le_bytes());
        out.extend_from_slice(&(self.pairs.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.pairs.len() as u32).to_le_bytes());
        out.push(ablation_bits(self.ablation));
        out.extend_from_slice(&self.dropout_p.to_le_bytes());
        out.extend_from_slice(&self.eps.to_le_bytes());
        out.extend_from_slice(&self.momentum.to_le_bytes());
        self.walk_state_ref(&mut |t| {
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        });
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.save_bytes())
            .map_err(|e| Error::io(format!("writing model to {}", path.display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<IcMlpModel> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| Error::io(format!("reading model from {}", path.display()), e))?;
        Self::load_bytes(&bytes, path)
    }

    pub fn load_bytes(bytes: &[u8], path: impl AsRef<Path>) -> Result<IcMlpModel> {
        let mut r = ByteReader {
            bytes,
            off: 0,
            path: path.as_ref(),
        };

        if r.take(MAGIC.len())? != MAGIC {
            return Err(r.fail(0, "bad magic, not a model file"));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(r.fail(
                MAGIC.len(),
                format!("unsupported format version {version}"),
            ));
        }
        let input_dim = r.read_u32()?;
        let n_classes = r.read_u32()?;
        let n_res = r.read_u32()?;
        let n_down = r.read_u32()?;
        let bits_off = r.off;
        let bits = r.take(1)?[0];
        if bits & !0b111 != 0 {
            return Err(r.fail(bits_off, "unknown ablation bits"));
        }
        let ablation = Ablation {
            no_dropout: bits & 0b001 != 0,
            no_ic: bits & 0b010 != 0,
            no_skip: bits & 0b100 != 0,
        };
        let hp_off = r.off;
        let dropout_p = r.read_f64()?;
        let eps = r.read_f64()?;
        let momentum = r.read_f64()?;
        if !(0.0..1.0).contains(&dropout_p) || !eps.is_finite() || !momentum.is_finite() {
            return Err(r.fail(hp_off, "header hyperparameters out of range"));
        }

        let mut model = build_structure(
            input_dim, n_classes, n_res, n_down, dropout_p, eps, momentum, ablation,
        )
        .map_err(|e| r.fail(MAGIC.len() + 2, format!("inconsistent header: {e}")))?;

        let mut err: Option<Error> = None;
        model.walk_state_mut(&mut |t| {
            if err.is_some() {
                return;
            }
            match r.take(t.len() * 8) {
                Err(e) => err = Some(e),
                Ok(raw) => {
                    for (i, v) in t.data_mut().iter_mut().enumerate() {
                        *v = f64::from_le_bytes(raw[i * 8..i * 8 + 8].try_into().unwrap());
                    }
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if r.off != bytes.len() {
            let off = r.off;
            return Err(r.fail(off, "trailing bytes after model state"));
        }
        Ok(model)
    }

    fn state_len(&self) -> usize {
        let mut n = 0;
        self.walk_state_ref(&mut |t| n += t.len());
        n
    }

    // The two walkers below must stay mirror images of each other; the
    // save -> load -> save round-trip test pins their agreement.
    fn walk_state_ref(&self, f: &mut impl FnMut(&Tensor2D)) {
        let bn_ref = |ic: &Option<IcLayer>, f: &mut dyn FnMut(&Tensor2D)| {
            if let Some(ic) = ic {
                f(ic.bn.gamma());
                f(ic.bn.beta());
                f(ic.bn.running_mean());
                f(ic.bn.running_var());
            }
        };
        for (res, down) in &self.pairs {
            bn_ref(&res.ic1, f);
            res.fc1.visit_params_ref(f);
            bn_ref(&res.ic2, f);
            res.fc2.visit_params_ref(f);
            bn_ref(&down.ic, f);
            down.fc.visit_params_ref(f);
        }
        self.head.visit_params_ref(f);
    }

    fn walk_state_mut(&mut self, f: &mut impl FnMut(&mut Tensor2D)) {
        let bn_mut = |ic: &mut Option<IcLayer>, f: &mut dyn FnMut(&mut Tensor2D)| {
            if let Some(ic) = ic {
                let (gamma, beta, rm, rv) = ic.bn.state_mut();
                f(gamma);
                f(beta);
                f(rm);
                f(rv);
            }
        };
        let lin_mut = |fc: &mut LinearLayer, f: &mut dyn FnMut(&mut Tensor2D)| {
            f(fc.weight_mut());
            f(fc.bias_mut());
        };
        for (res, down) in &mut self.pairs {
            bn_mut(&mut res.ic1, f);
            lin_mut(&mut res.fc1, f);
            bn_mut(&mut res.ic2, f);
            lin_mut(&mut res.fc2, f);
            bn_mut(&mut down.ic, f);
            lin_mut(&mut down.fc, f);
        }
        lin_mut(&mut self.head, f);
    }
}

const MAGIC: &[u8; 6] = b"ICMLP\0";
const FORMAT_VERSION: u16 = 1;
// magic + version + 4x u32 + ablation byte + 3x f64
const HEADER_LEN: usize = 6 + 2 + 16 + 1 + 24;

fn ablation_bits(a: Ablation) -> u8 {
    (a.no_dropout as u8) | ((a.no_ic as u8) << 1) | ((a.no_skip as u8) << 2)
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    off: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn fail(&self, offset: usize, msg: impl Into<String>) -> Error {
        Error::ModelFormat {
            path: self.path.to_path_buf(),
            offset,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.off + n > self.bytes.len() {
            return Err(self.fail(self.off, "unexpected end of file"));
        }
        let s = &self.bytes[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }

    fn read_u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn read_f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
