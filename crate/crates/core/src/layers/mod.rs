//! Forward and reverse-mode kernels for every layer kind used by the tuned
//! VGG-16 networks, plus the classification loss and the L2 penalty.

mod activation;
mod conv;
mod dense;
mod dropout;
mod loss;
mod pool;

pub use activation::{relu_backward, relu_forward};
pub use conv::{conv2d_backward, conv2d_forward, conv2d_forward_direct, ConvParamGrads};
pub use dense::{dense_backward, dense_forward};
pub use dropout::{dropout_apply, dropout_backward, DropoutMask};
pub use loss::{l2_penalty, softmax, softmax_cross_entropy, L2Term};
pub use pool::{
    global_avg_pool_backward, global_avg_pool_forward, maxpool2x2_backward, maxpool2x2_forward, PoolArgmax,
};

use crate::tensor::{Real, Tensor};

/// Suffix of a layer's kernel / weight matrix parameter.
pub const WEIGHT: &str = "weight";
/// Suffix of a layer's bias parameter.
pub const BIAS: &str = "bias";

/// Fully qualified parameter name, e.g. `conv1_1.weight`.
pub fn param_name(layer: &str, suffix: &str) -> String {
    format!("{layer}.{suffix}")
}

/// Splits `conv1_1.weight` into `("conv1_1", "weight")`.
pub fn split_param_name(name: &str) -> Option<(&str, &str)> {
    name.rsplit_once('.')
}

/// Train mode enables dropout; eval mode is inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Gradients of one layer application.
#[derive(Clone, Debug)]
pub struct LayerGrad<T: Real = f32> {
    pub d_input: Tensor<T>,
    /// `(suffix, gradient)` pairs, e.g. `("weight", ..)`; empty for parameterless layers.
    pub d_params: Vec<(String, Tensor<T>)>,
}

impl<T: Real> LayerGrad<T> {
    pub fn input_only(d_input: Tensor<T>) -> Self {
        LayerGrad {
            d_input,
            d_params: Vec::new(),
        }
    }

    pub fn param(&self, suffix: &str) -> Option<&Tensor<T>> {
        self.d_params.iter().find(|(name, _)| name == suffix).map(|(_, t)| t)
    }
}
