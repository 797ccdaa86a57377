//! Tensors, layer kernels and the EMO-NET classifier.

mod conv;
mod layers;
mod net;
mod tensor;

pub use conv::{conv2d_backward, conv2d_forward, conv_output_len, ConvGeometry};
pub use layers::{
    dropout_backward, dropout_forward, dropout_mask, fc_backward, fc_forward, maxpool_backward,
    maxpool_forward, relu_backward, relu_forward, PoolOutput,
};
pub use net::{
    backward, forward, infer, init_params, Architecture, Caches, ForwardMode, ForwardPass,
    LayerSpec, ModelParams,
};
pub use tensor::{Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation after layer {layer} ({kind})")]
    NonFiniteActivation { layer: usize, kind: &'static str },
    #[error("cached activations do not match this gradient: {0}")]
    StaleCache(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
}
