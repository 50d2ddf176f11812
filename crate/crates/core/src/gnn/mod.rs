//! Message-passing network over textile graphs: graph construction, encoder
//! and propagation blocks, prediction heads, loss, training, and rollout.

mod graph;
mod model;
mod rollout;
mod train;

pub use graph::{build_graph, grid_arcs, GraphData, TextileGraph};
pub use model::{
    edge_feature_for, oracle_label, GnnModel, ModelConfig, Prediction, Variant, EC_SCALE,
    FORCE_SCALE, HIDDEN, ORACLE_WIDTH, T_STEPS,
};
pub use rollout::{rollout, RolloutResult};
pub use train::{train, TrainConfig, TrainReport, TrainSample};
