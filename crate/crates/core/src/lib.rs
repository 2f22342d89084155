//! A self-contained feed-forward classifier for fixed-width feature
//! vectors. The architecture whitens the input of every linear layer with
//! batch normalization followed by dropout, alternates width-preserving
//! residual blocks with width-halving blocks, and ends in a bare linear
//! head. Training uses AdamW with decoupled weight decay under a per-epoch
//! exponential learning-rate schedule, with early stopping on validation
//! loss. Evaluation tooling covers repeated k-fold cross-validation, a
//! structural ablation sweep, random hyperparameter search, and
//! Monte-Carlo-dropout uncertainty estimates.
//!
//! Everything is f64 and deterministic: one seed pins initialization,
//! shuffles, dropout masks, and therefore every reported number.

pub mod data;
pub mod error;
pub mod layers;
pub mod model;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod uncertainty;

pub use error::{Error, Result};
pub use model::{build_model, Ablation, IcMlpModel, ModelMode};
pub use tensor::Tensor2D;
pub use train::TrainConfig;
