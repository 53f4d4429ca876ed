//! Sampling-based graph convolutional network training.
//!
//! The crate is organised around a few pieces:
//!
//! * [`graph`]: CSR topology, the normalized propagation matrix `Â` and the
//!   plain-text dataset format.
//! * [`engine`]: dense GCN layers, sampled aggregation, explicit gradients,
//!   Adam and metrics.
//! * [`layerwise`]: the layer-wise sampler backed by running `‖hW‖` estimates.
//! * [`subgraph`]: node and edge subgraph samplers run once before training.
//! * [`lab`]: brute-force and Monte-Carlo checks of the estimators.
//! * [`train`]: the training loop tying everything together.

pub mod dense;
pub mod engine;
pub mod error;
pub mod graph;
pub mod lab;
pub mod layerwise;
pub mod linqs;
pub mod params_io;
pub mod subgraph;
pub mod synthetic;
pub mod train;

pub use dense::{DenseMatrix, SparseRows};
pub use engine::{
    argmax_rows, backward, evaluate_full, f1_micro, forward, full_forward,
    sampled_forward_layerwise, sampled_forward_subgraph, softmax_cross_entropy,
    unbiased_subgraph_loss, Activation, AdamState, DropoutMasks, Forward, GnnParameters,
    LossNormalization, Propagation, SubgraphLossContext,
};
pub use error::{Error, Result};
pub use graph::{
    column_sq_norms, load_dataset, normalize_adjacency, write_dataset, Dataset, FeatureMatrix,
    Graph, LabelSet, Normalization, NormalizedAdjacency, SplitKind, SplitMask,
};
pub use layerwise::{
    build_plan, init_hw, update_hw, HwSource, HwTable, LayerSamplePlan, LayerSampler,
    LevelWeighting, SamplingCost,
};
pub use subgraph::{
    extract_subgraph, induced_edge_probs, sample_subgraph_edges, sample_subgraph_nodes,
    subgraph_node_probs, EdgeDistribution, Subgraph, SubgraphPool,
};
pub use train::{prepare_inputs, FeatureNorm, MetricsLog, MetricsRow, SamplerKind, TrainConfig, TrainOutcome, Trainer};
