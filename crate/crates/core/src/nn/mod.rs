//! Dense tensors, a reverse-mode tape and the fully-connected layer set used by
//! the 2D experiments.

mod adam;
mod gemm;
pub mod gradcheck;
mod layers;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gemm::matmul;
pub use layers::{parse_architecture, BatchNorm, Layer, LayerSpec, Linear, Mlp, Mode, BN_EPS, BN_MOMENTUM};
pub use params::{ParamId, ParamSet};
pub use tape::{Activation, BatchStats, Gradients, NodeId, Tape};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
