//! Small dense feed-forward networks with hand-written backpropagation.
//!
//! Layers are `linear -> [batchnorm] -> activation`. Everything runs in
//! `f64`, batches are row-major `(batch, features)` matrices.

mod layer;
mod linalg;
mod loss;
mod model;
mod optim;
mod train;

pub use layer::{sigmoid, softplus, Activation, BatchNorm, Layer, LayerSpec, BN_EPS, BN_MOMENTUM};
pub use loss::{bce_from_logits, loss_and_grad, loss_value, Loss, LossEval};
pub use model::{ForwardCache, Gradients, LayerGrad, Mlp, Mode, MODEL_SCHEMA_VERSION};
pub use optim::{OptimizerKind, OptimizerState};
pub use train::{fit_bce, fit_bce_with, FitReport, TrainConfig};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("model has no layers")]
    EmptyModel,
    #[error("layer {layer} has zero width")]
    ZeroWidth { layer: usize },
    #[error("layer {layer}: expected input width {expected}, got {got}")]
    WidthMismatch { layer: usize, expected: usize, got: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("loss is not finite ({0}); training diverged")]
    NonFiniteLoss(f64),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("model dump: {0}")]
    Serde(String),
    #[error("unsupported model schema version {0:?}")]
    SchemaVersion(Option<u64>),
}

/// Discriminator stack `in -> h1 -> h2 -> h3 -> 1`: ReLU hidden layers with
/// bias, sigmoid head, no batchnorm.
pub fn discriminator_specs(input: usize, hidden: [usize; 3]) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(4);
    let mut prev = input;
    for h in hidden {
        specs.push(LayerSpec::new(prev, h, Activation::Relu));
        prev = h;
    }
    specs.push(LayerSpec::new(prev, 1, Activation::Sigmoid));
    specs
}

/// Generator stack `noise -> h1 -> h2(BN) -> h3(BN) -> out`: bias-free,
/// LeakyReLU(0.2) hidden layers, sigmoid head without batchnorm.
pub fn generator_specs(noise_dim: usize, hidden: [usize; 3], output: usize) -> Vec<LayerSpec> {
    let leaky = Activation::LEAKY_DEFAULT;
    vec![
        LayerSpec::new(noise_dim, hidden[0], leaky).with_bias(false),
        LayerSpec::new(hidden[0], hidden[1], leaky).with_bias(false).with_batchnorm(true),
        LayerSpec::new(hidden[1], hidden[2], leaky).with_bias(false).with_batchnorm(true),
        LayerSpec::new(hidden[2], output, Activation::Sigmoid).with_bias(false),
    ]
}
