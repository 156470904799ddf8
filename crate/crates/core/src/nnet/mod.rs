//! The multi-label CNN: kernels, network, loss, optimizer and training.

mod adam;
mod baseline;
mod exec;
mod gradcheck;
pub mod layers;
mod loss;
mod network;
mod tensor;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use baseline::{BaselineMode, StatBaseline};
pub use exec::{tree_sum, Executor, Sequential, BLOCK};
pub use gradcheck::{
    grad_check, grad_check_params, GradCheckReport, LayerGradError, GRAD_CHECK_STEP,
    GRAD_CHECK_TOLERANCE,
};
pub use layers::{
    conv2d, conv2d_backward, maxpool2, maxpool2_backward, ConvGeometry, ConvGrads, Pooled,
};
pub use loss::{loss_grad_logits, multi_label_soft_margin_loss, PROB_CLIP};
pub(crate) use network::embed_input;
pub use network::{
    forward, Activation, ConvSpec, ForwardOutput, LayerShape, LayerSlot, ModelParams, NetworkConfig,
};
pub use tensor::Tensor;
pub use train::{
    batch_gradient, predict_labels, predict_labels_with, threshold_bits, train, train_with,
    DataSplit, EpochLog, LabelPrediction, TrainConfig, TrainOutcome,
};

use libm::{exp, expm1};

pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * expm1(x)
    }
}

/// Derivative of SeLU at pre-activation `x`.
pub fn selu_grad_from_input(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * exp(x)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}
