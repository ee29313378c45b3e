//! Dense matrices, reverse-mode differentiation, MLP layers and optimizers.

mod checkpoint;
mod gradcheck;
mod matrix;
mod mlp;
mod optim;
mod params;
mod rng;
mod scalar;
mod tape;

pub use checkpoint::{Checkpoint, ParamRecord, CHECKPOINT_FORMAT};
pub use gradcheck::grad_check;
pub use matrix::Matrix;
pub use mlp::{mlp_apply, Activation, LayerSpec, Mlp};
pub use optim::{CosineRestarts, Optimizer, OptimizerConfig, OptimizerKind};
pub use params::{ParamId, ParamSet};
pub use rng::SeedStream;
pub use scalar::Real;
pub use tape::{Gradients, Tape, Var};

pub(crate) use rng::{fnv1a, splitmix64};
