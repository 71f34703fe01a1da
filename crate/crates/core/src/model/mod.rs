//! GraphSAGE with attention over edge-difference attributes, and the plain
//! GraphSAGE baseline.
//!
//! Each layer updates every node from its own state and the mean of its
//! neighbors' states. The full model then scores every incoming edge with
//! multi-head query/key attention, mixes the transformed edge attributes by
//! those weights, and projects the concatenation `[h, context]` back to the
//! hidden size. Graph logits are read at node 0, the source tweet.

mod forward;
mod layers;
mod params;

use thiserror::Error;

pub use forward::{forward, loss_and_gradients, predict, EdgeAttrTable, ForwardPass, GraphBatch, LossGradients, Mode};
pub use layers::{edge_attention, edge_differences, edge_mlp, mean_edge_attention, sage_conv, Messages};
pub use params::{
    AttentionVariant, Checkpoint, ModelConfig, ModelKind, ModelParams, NamedTensor, ParamSpec, CHECKPOINT_FORMAT,
};

use crate::artifact::ArtifactError;
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("graph {graph_id} features have dimension {actual}, model expects {expected}")]
    FeatureDim {
        graph_id: usize,
        expected: usize,
        actual: usize,
    },
    #[error("layer {layer}: {source}")]
    Layer { layer: usize, source: NumericsError },
    #[error("{stage}: {source}")]
    Numerics {
        stage: &'static str,
        source: NumericsError,
    },
    #[error("graph {0} has no label")]
    Unlabeled(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

impl ModelError {
    pub(crate) fn at_layer(layer: usize) -> impl FnOnce(NumericsError) -> Self {
        move |source| Self::Layer { layer, source }
    }

    pub(crate) fn at(stage: &'static str) -> impl FnOnce(NumericsError) -> Self {
        move |source| Self::Numerics { stage, source }
    }

    /// True when the failure is a NaN or infinity rather than a shape or
    /// configuration problem.
    pub fn is_non_finite(&self) -> bool {
        let n = match self {
            Self::Layer { source, .. } | Self::Numerics { source, .. } => source,
            _ => return false,
        };
        matches!(n, NumericsError::NonFinite { .. } | NumericsError::NonFiniteGradient { .. })
    }
}
