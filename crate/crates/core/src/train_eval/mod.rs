//! Dataset split, training loop, early stopping, metrics and curve export.

mod curves;
mod early_stop;
mod metrics;
mod split;
mod train;

use thiserror::Error;

pub use curves::{curves_to_string, export_curves, parse_curves, CURVE_COLUMNS};
pub use early_stop::{EarlyStopping, StopDecision};
pub use metrics::{class_name, ClassMetrics, MetricsReport};
pub use split::{split_dataset, Split, MIN_SPLIT_ITEMS};
pub use train::{
    evaluate, loss_and_accuracy, predict_graphs, train, train_from, BatchLoss, EpochStats, TrainConfig, TrainLog,
    TrainOutcome,
};

use crate::artifact::ArtifactError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("need at least {needed} graphs, found {found}")]
    TooFewGraphs { needed: usize, found: usize },
    #[error("graph {0} has no label")]
    Unlabeled(usize),
    #[error("non-finite value at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Unlabeled(id) => TrainError::Unlabeled(id),
            other => TrainError::Model(other),
        }
    }
}
