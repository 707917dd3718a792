//! HENet architecture: the group-count rule, building blocks, network
//! builders, and the executable graph they produce.

pub mod block;
pub mod builders;
pub mod config;
pub mod graph;
pub mod groups;

pub use block::{
    make_stride1_block, make_stride2_block, skip_combine, stride1_block_forward, stride2_block_forward,
    stride2_padding, BlockKind, BlockOutput, BlockSpec, BlockWeights,
};
pub use builders::{build_henet, build_model, build_shufflenet_baseline};
pub use config::NetworkConfig;
pub use graph::{
    Activations, BlockRecord, Gradients, Layer, LayerKind, Mode, ModelFamily, ModelGraph, Node, NodeId, ParamInfo,
    ParamKind,
};
pub use groups::nearest_divisor_pair;
