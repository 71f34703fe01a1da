//! Model configuration, parameter layout, initialization and checkpoints.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::artifact::{self, ArtifactError, FORMAT_VERSION};
use crate::classes::NUM_CLASSES;
use crate::graph::Neighborhood;
use crate::numerics::Tensor;

pub const CHECKPOINT_FORMAT: &str = "rumorsage.checkpoint";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// GraphSAGE layers with attention over edge-difference attributes.
    #[default]
    EdgeAttention,
    /// Plain GraphSAGE layers and the output head.
    Baseline,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "edge_attention" | "edge-attention" => Ok(Self::EdgeAttention),
            "baseline" | "graphsage" => Ok(Self::Baseline),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

/// How the per-edge weights of the edge context are obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionVariant {
    /// Scaled query/key scores, softmax over each node's incoming edges,
    /// then the weighted sum of edge attributes.
    #[default]
    Learned,
    /// Softmax over the mean of each edge attribute vector, then the mean of
    /// the weighted attributes. No query/key projections.
    AttrMean,
}

impl std::str::FromStr for AttentionVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "learned" => Ok(Self::Learned),
            "attrmean" | "attr_mean" => Ok(Self::AttrMean),
            other => Err(format!("unknown attention variant {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub in_dim: usize,
    pub hidden: usize,
    pub edge_hidden: usize,
    pub classes: usize,
    pub heads: usize,
    pub depth: usize,
    pub dropout: f64,
    pub neighborhood: Neighborhood,
    pub attention: AttentionVariant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_dim: 768,
            hidden: 64,
            edge_hidden: 64,
            classes: NUM_CLASSES,
            heads: 2,
            depth: 2,
            dropout: 0.5,
            neighborhood: Neighborhood::Directed,
            attention: AttentionVariant::Learned,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.in_dim == 0 || self.hidden == 0 || self.edge_hidden == 0 || self.depth == 0 {
            return bad("dimensions and depth must be positive".into());
        }
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return bad(format!("hidden {} is not divisible by heads {}", self.hidden, self.heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub bias: bool,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerSlots {
    pub w_self: usize,
    pub w_neigh: usize,
    /// Query and key projections; absent for the baseline and `AttrMean`.
    pub attention: Option<(usize, usize)>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct EdgeSlots {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub w3: usize,
}

/// Positions of each parameter in the flat tensor list.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub specs: Vec<ParamSpec>,
    pub layers: Vec<LayerSlots>,
    pub edge: Option<EdgeSlots>,
    pub w4: usize,
}

impl Layout {
    pub fn new(kind: ModelKind, c: &ModelConfig) -> Self {
        let mut specs = Vec::new();
        let mut add = |name: String, rows: usize, cols: usize, bias: bool| {
            specs.push(ParamSpec { name, rows, cols, bias });
            specs.len() - 1
        };
        let mut layers = Vec::with_capacity(c.depth);
        for k in 0..c.depth {
            let d_in = if k == 0 { c.in_dim } else { c.hidden };
            let w_self = add(format!("layer{k}.w_self"), d_in, c.hidden, false);
            let w_neigh = add(format!("layer{k}.w_neigh"), d_in, c.hidden, false);
            let attention = (kind == ModelKind::EdgeAttention && c.attention == AttentionVariant::Learned).then(|| {
                (
                    add(format!("layer{k}.w_q"), c.hidden, c.hidden, false),
                    add(format!("layer{k}.w_k"), c.hidden, c.hidden, false),
                )
            });
            layers.push(LayerSlots {
                w_self,
                w_neigh,
                attention,
            });
        }
        let edge = (kind == ModelKind::EdgeAttention).then(|| EdgeSlots {
            w1: add("edge.w1".into(), c.in_dim, c.edge_hidden, false),
            b1: add("edge.b1".into(), 1, c.edge_hidden, true),
            w2: add("edge.w2".into(), c.edge_hidden, c.edge_hidden, false),
            b2: add("edge.b2".into(), 1, c.edge_hidden, true),
            w3: add("combine.w3".into(), c.hidden + c.edge_hidden, c.hidden, false),
        });
        let w4 = add("out.w4".into(), c.hidden, c.classes, false);
        Self {
            specs,
            layers,
            edge,
            w4,
        }
    }
}

/// All trainable tensors of one model, in a fixed named order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    kind: ModelKind,
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Xavier-uniform weights in `±√(6/(fan_in+fan_out))`, zero biases.
    pub fn init(kind: ModelKind, config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(kind, config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = layout
            .specs
            .iter()
            .map(|s| {
                if s.bias {
                    return Tensor::zeros(s.rows, s.cols);
                }
                let limit = (6.0 / (s.rows + s.cols) as f64).sqrt();
                let data = (0..s.rows * s.cols).map(|_| rng.random_range(-limit..limit)).collect();
                Tensor::from_vec(s.rows, s.cols, data).expect("spec shape")
            })
            .collect();
        Ok(Self {
            kind,
            config: config.clone(),
            names: layout.specs.into_iter().map(|s| s.name).collect(),
            tensors,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.tensors.iter_mut().collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Same model with replaced tensor values; shapes must match.
    pub fn with_tensors(&self, tensors: Vec<Tensor>) -> Result<Self, ModelError> {
        if tensors.len() != self.tensors.len() {
            return Err(ModelError::Config(format!(
                "expected {} tensors, got {}",
                self.tensors.len(),
                tensors.len()
            )));
        }
        for ((name, old), new) in self.names.iter().zip(&self.tensors).zip(&tensors) {
            if old.shape() != new.shape() {
                return Err(ModelError::Config(format!(
                    "{name}: expected shape {:?}, got {:?}",
                    old.shape(),
                    new.shape()
                )));
            }
        }
        Ok(Self {
            tensors,
            ..self.clone()
        })
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(self.kind, &self.config)
    }

    pub fn to_checkpoint(&self, run_config: serde_json::Value) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: FORMAT_VERSION,
            kind: self.kind,
            model: self.config.clone(),
            tensors: self
                .names
                .iter()
                .zip(&self.tensors)
                .map(|(name, t)| NamedTensor {
                    name: name.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                    data: t.data().to_vec(),
                })
                .collect(),
            run_config,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != FORMAT_VERSION {
            return Err(ModelError::Config(format!(
                "not a checkpoint: {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        ckpt.model.validate()?;
        let layout = Layout::new(ckpt.kind, &ckpt.model);
        if layout.specs.len() != ckpt.tensors.len() {
            return Err(ModelError::Config(format!(
                "checkpoint has {} tensors, model needs {}",
                ckpt.tensors.len(),
                layout.specs.len()
            )));
        }
        let mut tensors = Vec::with_capacity(layout.specs.len());
        for (spec, t) in layout.specs.iter().zip(&ckpt.tensors) {
            if spec.name != t.name || spec.rows != t.rows || spec.cols != t.cols {
                return Err(ModelError::Config(format!(
                    "checkpoint tensor {} {}x{} does not match {} {}x{}",
                    t.name, t.rows, t.cols, spec.name, spec.rows, spec.cols
                )));
            }
            let tensor = Tensor::from_vec(t.rows, t.cols, t.data.clone())
                .map_err(|e| ModelError::Config(format!("{}: {e}", t.name)))?;
            if !tensor.is_finite() {
                return Err(ModelError::Config(format!("{}: non-finite values", t.name)));
            }
            tensors.push(tensor);
        }
        Ok(Self {
            kind: ckpt.kind,
            config: ckpt.model.clone(),
            names: layout.specs.into_iter().map(|s| s.name).collect(),
            tensors,
        })
    }

    pub fn save(&self, path: &Path, run_config: serde_json::Value) -> Result<(), ArtifactError> {
        artifact::write_json(path, &self.to_checkpoint(run_config))
    }

    pub fn load(path: &Path) -> Result<(Self, Checkpoint), ModelError> {
        let ckpt: Checkpoint = artifact::read_json(path)?;
        Ok((Self::from_checkpoint(&ckpt)?, ckpt))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// On-disk form of [`ModelParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub model: ModelConfig,
    pub tensors: Vec<NamedTensor>,
    #[serde(default)]
    pub run_config: serde_json::Value,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let c = ModelConfig::default();
        let a = ModelParams::init(ModelKind::EdgeAttention, &c, 11).unwrap();
        let b = ModelParams::init(ModelKind::EdgeAttention, &c, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.get("edge.b1").unwrap().data().iter().all(|&x| x == 0.0));
        assert!(a.get("edge.b2").unwrap().data().iter().all(|&x| x == 0.0));
        assert_ne!(a, ModelParams::init(ModelKind::EdgeAttention, &c, 12).unwrap());
    }

    #[test]
    fn init_bounds_and_mean() {
        let c = ModelConfig::default();
        let p = ModelParams::init(ModelKind::EdgeAttention, &c, 3).unwrap();
        let w = p.get("layer1.w_self").unwrap();
        let limit = (6.0f64 / 128.0).sqrt();
        assert!(w.data().iter().all(|x| x.abs() < limit));
        // first 10^4 draws of W1: uniform(−a, a) has σ = a/√3
        let w1 = p.get("edge.w1").unwrap();
        let a = (6.0f64 / (768.0 + 64.0)).sqrt();
        let n = 10_000;
        let mean = w1.data()[..n].iter().sum::<f64>() / n as f64;
        let sigma_of_mean = a / 3f64.sqrt() / (n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma_of_mean, "mean {mean}");
    }

    #[test]
    fn shapes_and_counts() {
        let c = ModelConfig::default();
        let full = ModelParams::init(ModelKind::EdgeAttention, &c, 0).unwrap();
        let base = ModelParams::init(ModelKind::Baseline, &c, 0).unwrap();
        assert_eq!(full.get("layer0.w_self").unwrap().shape(), (768, 64));
        assert_eq!(full.get("layer1.w_q").unwrap().shape(), (64, 64));
        assert_eq!(full.get("combine.w3").unwrap().shape(), (128, 64));
        assert_eq!(full.get("out.w4").unwrap().shape(), (64, 5));
        assert!(base.num_scalars() < full.num_scalars());
        assert!(base.get("edge.w1").is_none());
        let attr = ModelConfig {
            attention: AttentionVariant::AttrMean,
            ..c
        };
        let p = ModelParams::init(ModelKind::EdgeAttention, &attr, 0).unwrap();
        assert!(p.get("layer0.w_q").is_none());
    }

    #[test]
    fn invalid_configs() {
        let c = ModelConfig {
            hidden: 63,
            ..ModelConfig::default()
        };
        assert!(ModelParams::init(ModelKind::EdgeAttention, &c, 0).is_err());
        let c = ModelConfig {
            dropout: 1.0,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let c = ModelConfig {
            in_dim: 7,
            hidden: 4,
            edge_hidden: 3,
            ..ModelConfig::default()
        };
        let mut p = ModelParams::init(ModelKind::EdgeAttention, &c, 5).unwrap();
        p.get_mut("edge.b1").unwrap().data_mut()[0] = 0.1 + 0.2;
        p.get_mut("out.w4").unwrap().data_mut()[0] = f64::MIN_POSITIVE;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        p.save(&path, serde_json::json!({"seed": 5})).unwrap();
        let (q, ckpt) = ModelParams::load(&path).unwrap();
        assert_eq!(ckpt.run_config["seed"], 5);
        for (a, b) in p.tensors().iter().zip(q.tensors()) {
            let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        let mut bad = p.to_checkpoint(serde_json::Value::Null);
        bad.tensors[0].rows += 1;
        assert!(ModelParams::from_checkpoint(&bad).is_err());
    }
}
