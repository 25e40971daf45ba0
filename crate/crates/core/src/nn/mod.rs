//! Differentiable numerical kernels with hand-written backward passes.

pub mod affine;
pub mod attention;
pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod loss;
pub mod optim;
pub mod params;

pub use affine::{affine, affine_backward, AffineGrads};
pub use attention::{
    multihead_cross_attention, multihead_cross_attention_backward, AttentionCache,
    AttentionGrads, AttentionWeights,
};
pub use conv::{strided_conv1d, strided_conv1d_backward, ConvGrads, ConvSpec};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, Objective, TensorCheck};
pub use loss::{binary_cross_entropy, focal_loss, focal_loss_grad, sigmoid, FocalParams};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::{ParamId, ParamSet, Tensors};
