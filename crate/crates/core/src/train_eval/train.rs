//! Mini-batch training with AdamW and validation-loss early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::early_stop::{EarlyStopping, StopDecision};
use super::metrics::MetricsReport;
use super::split::validate_ratios;
use super::TrainError;
use crate::graph::FeaturedGraph;
use crate::model::{forward, GraphBatch, ModelConfig, ModelError, ModelKind, ModelParams, Mode};
use crate::numerics::{AdamWConfig, AdamWState, NumericsError};

/// How per-graph losses in a batch are combined before the gradient step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchLoss {
    #[default]
    Mean,
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub batch_loss: BatchLoss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::EdgeAttention,
            learning_rate: 0.01,
            weight_decay: 0.01,
            batch_size: 16,
            max_epochs: 500,
            patience: 50,
            split: [0.7, 0.2, 0.1],
            batch_loss: BatchLoss::Mean,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        validate_ratios(self.split)?;
        let bad = |m: String| Err(TrainError::Config(m));
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy of the training-mode (dropout) predictions made during the epoch.
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn best(&self) -> Option<&EpochStats> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the lowest validation loss.
    pub params: ModelParams,
    pub log: TrainLog,
}

const EVAL_CHUNK: usize = 64;

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn labels_of(graphs: &[&FeaturedGraph]) -> Result<Vec<usize>, TrainError> {
    graphs
        .iter()
        .map(|g| g.graph.label.ok_or(TrainError::Unlabeled(g.graph.graph_id)))
        .collect()
}

fn check_labels(labels: &[usize], classes: usize) -> Result<(), TrainError> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(&l) => Err(TrainError::Config(format!("label {l} is out of range for {classes} classes"))),
        None => Ok(()),
    }
}

fn non_finite(epoch: usize, batch: usize) -> impl Fn(ModelError) -> TrainError {
    move |e| {
        if e.is_non_finite() {
            TrainError::NonFinite {
                epoch,
                batch,
                detail: e.to_string(),
            }
        } else {
            TrainError::Model(e)
        }
    }
}

/// Eval-mode predictions and per-graph losses.
pub fn predict_graphs(params: &ModelParams, graphs: &[FeaturedGraph]) -> Result<(Vec<usize>, Vec<f64>), TrainError> {
    let mut predictions = Vec::with_capacity(graphs.len());
    let mut losses = Vec::with_capacity(graphs.len());
    for chunk in graphs.chunks(EVAL_CHUNK) {
        let refs: Vec<&FeaturedGraph> = chunk.iter().collect();
        let labels = labels_of(&refs)?;
        check_labels(&labels, params.config().classes)?;
        let batch = GraphBatch::new(&refs, params.config().neighborhood)?;
        let mut pass = forward(params, &batch, Mode::Eval)?;
        let logits = pass.logits().clone();
        for (r, &y) in labels.iter().enumerate() {
            predictions.push(logits.argmax_row(r));
            let single = pass.tape.leaf(crate::numerics::Tensor::row_vector(logits.row(r)));
            let loss = pass
                .tape
                .cross_entropy(single, &[y])
                .map_err(|source| ModelError::Numerics { stage: "loss", source })?;
            losses.push(pass.tape.value(loss).get(0, 0));
        }
    }
    Ok((predictions, losses))
}

/// Eval-mode metrics over labeled graphs.
pub fn evaluate(params: &ModelParams, graphs: &[FeaturedGraph]) -> Result<MetricsReport, TrainError> {
    let (predictions, _) = predict_graphs(params, graphs)?;
    let labels: Vec<usize> = graphs.iter().map(|g| g.graph.label.expect("checked by predict_graphs")).collect();
    Ok(MetricsReport::from_predictions(&labels, &predictions, params.config().classes))
}

/// Sample-mean eval loss and accuracy.
pub fn loss_and_accuracy(params: &ModelParams, graphs: &[FeaturedGraph]) -> Result<(f64, f64), TrainError> {
    let (predictions, losses) = predict_graphs(params, graphs)?;
    let n = graphs.len().max(1) as f64;
    let correct = predictions
        .iter()
        .zip(graphs)
        .filter(|(p, g)| g.graph.label == Some(**p))
        .count();
    Ok((losses.iter().sum::<f64>() / n, correct as f64 / n))
}

/// Trains from a fresh initialization seeded by `config.seed`.
pub fn train(
    model: &ModelConfig,
    config: &TrainConfig,
    train_set: &[FeaturedGraph],
    val_set: &[FeaturedGraph],
) -> Result<TrainOutcome, TrainError> {
    let params = ModelParams::init(config.kind, model, config.seed)?;
    train_from(params, config, train_set, val_set)
}

/// Trains `params` in place of a fresh initialization.
pub fn train_from(
    mut params: ModelParams,
    config: &TrainConfig,
    train_set: &[FeaturedGraph],
    val_set: &[FeaturedGraph],
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::Config("training and validation sets must be non-empty".into()));
    }
    let all: Vec<&FeaturedGraph> = train_set.iter().collect();
    check_labels(&labels_of(&all)?, params.config().classes)?;

    let mut optimizer = AdamWState::new(config.adamw(), params.tensors().iter());
    let mut shuffler = ChaCha8Rng::seed_from_u64(mix(config.seed, 1, 0));
    let mut stopper = EarlyStopping::new(config.patience);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = params.clone();
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffler);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let refs: Vec<&FeaturedGraph> = chunk.iter().map(|&i| &train_set[i]).collect();
            let labels = labels_of(&refs)?;
            let batch = GraphBatch::new(&refs, params.config().neighborhood)?;
            let seed = mix(config.seed, epoch as u64, b as u64 + 2);
            let pass = forward(&params, &batch, Mode::Train { seed }).map_err(non_finite(epoch, b))?;
            let logits = pass.logits().clone();
            correct += (0..labels.len()).filter(|&r| logits.argmax_row(r) == labels[r]).count();
            let mut out = pass.backward(&labels).map_err(non_finite(epoch, b))?;
            loss_sum += out.loss * labels.len() as f64;
            if config.batch_loss == BatchLoss::Sum {
                let n = labels.len() as f64;
                for g in &mut out.grads {
                    for x in g.data_mut() {
                        *x *= n;
                    }
                }
            }
            optimizer
                .step(&mut params.tensors_mut(), &out.grads)
                .map_err(|e| match e {
                    NumericsError::NonFiniteGradient { .. } | NumericsError::NonFinite { .. } => TrainError::NonFinite {
                        epoch,
                        batch: b,
                        detail: e.to_string(),
                    },
                    other => TrainError::Model(ModelError::Numerics {
                        stage: "optimizer",
                        source: other,
                    }),
                })?;
        }
        let n = train_set.len() as f64;
        let (val_loss, val_acc) = loss_and_accuracy(&params, val_set)?;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                batch: 0,
                detail: "validation loss".into(),
            });
        }
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            val_loss,
            val_acc,
        };
        log::debug!(
            "epoch {epoch}: train loss {:.4} acc {:.3}, val loss {:.4} acc {:.3}",
            stats.train_loss,
            stats.train_acc,
            stats.val_loss,
            stats.val_acc
        );
        epochs.push(stats);
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best = params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best,
        log: TrainLog {
            epochs,
            best_epoch: stopper.best_epoch().expect("at least one epoch ran"),
            stopped_early,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SignalKind, SynthConfig};

    fn data(seed: u64) -> Vec<FeaturedGraph> {
        generate(&SynthConfig {
            n_graphs: 20,
            feature_dim: 8,
            nodes_min: 2,
            nodes_max: 6,
            signal_strength: 3.0,
            signal: SignalKind::Node,
            seed,
            ..SynthConfig::default()
        })
        .unwrap()
        .featured_graphs()
    }

    fn model() -> ModelConfig {
        ModelConfig {
            in_dim: 8,
            hidden: 8,
            edge_hidden: 4,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic() {
        let d = data(1);
        let cfg = TrainConfig {
            max_epochs: 8,
            batch_size: 4,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = train(&model(), &cfg, &d[..14], &d[14..]).unwrap();
        let b = train(&model(), &cfg, &d[..14], &d[14..]).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.params, b.params);
        assert_eq!(a.log.epochs.len(), 8);
    }

    #[test]
    fn best_checkpoint_has_lowest_val_loss() {
        let d = data(2);
        let cfg = TrainConfig {
            max_epochs: 30,
            patience: 5,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let out = train(&model(), &cfg, &d[..14], &d[14..]).unwrap();
        let best = out.log.best().unwrap().val_loss;
        assert!(out.log.epochs.iter().all(|e| best <= e.val_loss));
        let (reloaded, _) = loss_and_accuracy(&out.params, &d[14..]).unwrap();
        assert_eq!(reloaded, best);
        if out.log.stopped_early {
            assert_eq!(out.log.epochs.len(), out.log.best_epoch + cfg.patience);
        }
    }

    #[test]
    fn training_lowers_the_loss() {
        let d = data(3);
        let cfg = TrainConfig {
            max_epochs: 40,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let out = train(&model(), &cfg, &d, &d).unwrap();
        let first = out.log.epochs[0].val_loss;
        assert!(out.log.best().unwrap().val_loss < first);
    }

    #[test]
    fn unlabeled_and_bad_configs_fail() {
        let mut d = data(4);
        d[0].graph.label = None;
        assert!(matches!(evaluate(&ModelParams::init(ModelKind::Baseline, &model(), 0).unwrap(), &d), Err(TrainError::Unlabeled(_))));
        let cfg = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(train(&model(), &cfg, &d[1..], &d[1..]).is_err());
    }
}
