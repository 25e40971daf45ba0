//! The hierarchical ShotConv network.

pub mod inner;
pub mod layer;
pub mod shots;
pub mod trace;

pub use inner::{inner_shotconv, inner_shotconv_backward, InnerGrads, InnerOutput, InnerWeights};
pub use layer::{
    forward_network, forward_network_backward, hierarchical_layer, hierarchical_layer_backward, lift_channels, LayerActivations,
    LayerParams, ScaleActivations, ScaleParams, ScaleSetting,
};
pub use shots::{
    cross_shot_pad, expand_to_frames, original_shot_bounds, pad_length, pool_shots, shot_blocks, split_shots, PadPlan,
};
pub use trace::{propagation_report, trace_propagation, PropagationReport};
