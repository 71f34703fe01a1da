//! Batched forward pass and loss gradients.
//!
//! A batch is the disjoint union of its graphs; message passing never
//! crosses graph boundaries and each graph is read out at its own node 0.

use std::sync::Arc;

use super::layers::{edge_attention, edge_differences, edge_mlp, mean_edge_attention, sage_conv, Messages};
use super::params::{AttentionVariant, ModelParams};
use super::ModelError;
use crate::graph::{FeaturedGraph, Neighborhood};
use crate::numerics::{Index, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, masks drawn from `seed`.
    Train { seed: u64 },
    Eval,
}

/// Stacked node features and message pairs of several graphs.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub x: Tensor,
    /// Edge differences `x[tgt] − x[nbr]`, one row per message.
    pub r: Tensor,
    pub messages: Messages,
    /// Row of each graph's source node.
    pub readout: Index,
    pub labels: Vec<Option<usize>>,
    pub graph_ids: Vec<usize>,
}

impl GraphBatch {
    pub fn new(graphs: &[&FeaturedGraph], neighborhood: Neighborhood) -> Result<Self, ModelError> {
        let first = graphs.first().ok_or(ModelError::EmptyBatch)?;
        let dim = first.features.cols();
        let total: usize = graphs.iter().map(|g| g.features.rows()).sum();
        let mut data = Vec::with_capacity(total * dim);
        let mut pairs = Vec::new();
        let mut readout = Vec::with_capacity(graphs.len());
        let mut offset = 0;
        for g in graphs {
            if g.features.cols() != dim {
                return Err(ModelError::FeatureDim {
                    graph_id: g.graph.graph_id,
                    expected: dim,
                    actual: g.features.cols(),
                });
            }
            readout.push(offset);
            data.extend_from_slice(g.features.data());
            pairs.extend(
                g.graph
                    .messages(neighborhood)
                    .into_iter()
                    .map(|(t, n)| (t + offset, n + offset)),
            );
            offset += g.features.rows();
        }
        let x = Tensor::from_vec(total, dim, data).expect("stacked rows");
        let messages = Messages::new(&pairs);
        Ok(Self {
            r: edge_differences(&x, &messages),
            x,
            messages,
            readout: readout.into(),
            labels: graphs.iter().map(|g| g.graph.label).collect(),
            graph_ids: graphs.iter().map(|g| g.graph.graph_id).collect(),
        })
    }

    pub fn single(g: &FeaturedGraph, neighborhood: Neighborhood) -> Result<Self, ModelError> {
        Self::new(&[g], neighborhood)
    }

    pub fn len(&self) -> usize {
        self.readout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readout.is_empty()
    }

    pub fn labels(&self) -> Result<Vec<usize>, ModelError> {
        self.labels
            .iter()
            .zip(&self.graph_ids)
            .map(|(l, &id)| l.ok_or(ModelError::Unlabeled(id)))
            .collect()
    }
}

/// A recorded forward pass.
pub struct ForwardPass {
    pub tape: Tape,
    /// Tape leaves of the parameters, in [`ModelParams::tensors`] order.
    pub params: Vec<Var>,
    pub logits: Var,
    /// Per-layer message weights (`E×1`); empty for the baseline.
    pub attention: Vec<Var>,
    pub edge_attrs: Option<Var>,
}

impl ForwardPass {
    /// `graphs × classes` logits.
    pub fn logits(&self) -> &Tensor {
        self.tape.value(self.logits)
    }

    pub fn attention_weights(&self, layer: usize) -> Option<&Tensor> {
        self.attention.get(layer).map(|&v| self.tape.value(v))
    }

    /// Mean cross-entropy over the batch and its parameter gradients.
    pub fn backward(mut self, labels: &[usize]) -> Result<LossGradients, ModelError> {
        let loss = self
            .tape
            .cross_entropy(self.logits, labels)
            .map_err(ModelError::at("loss"))?;
        let grads = self.tape.backward(loss).map_err(ModelError::at("backward"))?;
        Ok(LossGradients {
            loss: self.tape.value(loss).get(0, 0),
            grads: self.params.iter().map(|&p| grads.wrt(p)).collect(),
            signature: self.tape.activation_signature(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct LossGradients {
    pub loss: f64,
    pub grads: Vec<Tensor>,
    /// Fingerprint of the ReLU activation pattern of the pass.
    pub signature: u64,
}

fn layer_seed(seed: u64, layer: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(layer as u64)
}

/// Runs the model over `batch`. The baseline skips the edge path entirely.
pub fn forward(params: &ModelParams, batch: &GraphBatch, mode: Mode) -> Result<ForwardPass, ModelError> {
    let c = params.config();
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    if batch.x.cols() != c.in_dim {
        return Err(ModelError::FeatureDim {
            graph_id: batch.graph_ids[0],
            expected: c.in_dim,
            actual: batch.x.cols(),
        });
    }
    let layout = params.layout();
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.tensors().iter().map(|t| tape.leaf(t.clone())).collect();
    let n = batch.x.rows();

    let edge_attrs = match layout.edge {
        Some(e) => {
            let r = tape.leaf(batch.r.clone());
            Some(edge_mlp(&mut tape, r, vars[e.w1], vars[e.b1], vars[e.w2], vars[e.b2]).map_err(ModelError::at("edge attributes"))?)
        }
        None => None,
    };

    let mut h = tape.leaf(batch.x.clone());
    let mut attention = Vec::new();
    for (k, slots) in layout.layers.iter().enumerate() {
        let wrap = ModelError::at_layer;
        let pre = sage_conv(&mut tape, h, vars[slots.w_self], vars[slots.w_neigh], &batch.messages).map_err(wrap(k))?;
        let act = tape.relu(pre).map_err(wrap(k))?;
        h = match mode {
            Mode::Train { seed } => tape.dropout(act, c.dropout, layer_seed(seed, k), true),
            Mode::Eval => Ok(act),
        }
        .map_err(wrap(k))?;
        if let (Some(attrs), Some(e)) = (edge_attrs, layout.edge) {
            let (context, weights) = match (c.attention, slots.attention) {
                (AttentionVariant::Learned, Some((w_q, w_k))) => {
                    edge_attention(&mut tape, h, attrs, vars[w_q], vars[w_k], c.heads, &batch.messages)
                }
                _ => mean_edge_attention(&mut tape, attrs, &batch.messages, n),
            }
            .map_err(wrap(k))?;
            attention.push(weights);
            let joined = tape.concat_cols(h, context).map_err(wrap(k))?;
            h = tape.matmul(joined, vars[e.w3]).map_err(wrap(k))?;
        }
    }

    let readout = tape.gather_rows(h, Arc::clone(&batch.readout)).map_err(ModelError::at("readout"))?;
    let readout = tape.relu(readout).map_err(ModelError::at("readout"))?;
    let logits = tape.matmul(readout, vars[layout.w4]).map_err(ModelError::at("readout"))?;
    Ok(ForwardPass {
        tape,
        params: vars,
        logits,
        attention,
        edge_attrs,
    })
}

/// Mean cross-entropy of `batch` under its own labels, with gradients.
pub fn loss_and_gradients(params: &ModelParams, batch: &GraphBatch, mode: Mode) -> Result<LossGradients, ModelError> {
    let labels = batch.labels()?;
    forward(params, batch, mode)?.backward(&labels)
}

/// Eval-mode logits (`1×classes`) of one graph.
pub fn predict(params: &ModelParams, g: &FeaturedGraph) -> Result<Tensor, ModelError> {
    let batch = GraphBatch::single(g, params.config().neighborhood)?;
    Ok(forward(params, &batch, Mode::Eval)?.logits().clone())
}

/// Raw and transformed edge attributes of one graph, keyed by message pair.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeAttrTable {
    pub messages: Vec<(usize, usize)>,
    pub raw: Tensor,
    pub attrs: Tensor,
}

impl EdgeAttrTable {
    pub fn compute(params: &ModelParams, g: &FeaturedGraph) -> Result<Self, ModelError> {
        let batch = GraphBatch::single(g, params.config().neighborhood)?;
        let pass = forward(params, &batch, Mode::Eval)?;
        let attrs = pass
            .edge_attrs
            .map(|v| pass.tape.value(v).clone())
            .ok_or_else(|| ModelError::Config("the baseline has no edge attributes".into()))?;
        Ok(Self {
            messages: batch.messages.pairs().collect(),
            raw: batch.r,
            attrs,
        })
    }

    /// Attribute row of the message `neighbor → target`.
    pub fn get(&self, target: usize, neighbor: usize) -> Option<&[f64]> {
        let e = self.messages.iter().position(|&p| p == (target, neighbor))?;
        Some(self.attrs.row(e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{FeatureTable, StaticGraph};
    use crate::ingestion::{Id, NodeKind};
    use crate::model::{ModelConfig, ModelKind};
    use crate::numerics::{grad_check, GradCheckOptions, Probe};
    use crate::synth::{generate, SignalKind, SynthConfig};

    fn graphs(nodes: (usize, usize), dim: usize, seed: u64) -> Vec<FeaturedGraph> {
        generate(&SynthConfig {
            n_graphs: 10,
            nodes_min: nodes.0,
            nodes_max: nodes.1,
            feature_dim: dim,
            signal: SignalKind::Edge,
            seed,
            ..SynthConfig::default()
        })
        .unwrap()
        .featured_graphs()
    }

    fn small_config(dim: usize) -> ModelConfig {
        ModelConfig {
            in_dim: dim,
            hidden: 8,
            edge_hidden: 6,
            ..ModelConfig::default()
        }
    }

    fn single_node(dim: usize) -> FeaturedGraph {
        let mut table = FeatureTable::new(dim);
        table.push(Id("s".into()), &vec![0.5; dim]).unwrap();
        let g = StaticGraph {
            graph_id: 0,
            label: Some(3),
            nodes: vec![crate::graph::GraphNode {
                i: 0,
                tweet_id: Id("s".into()),
                ts: 0,
                kind: NodeKind::Source,
            }],
            edges: vec![],
        };
        crate::graph::attach_features(&g, &table, dim).unwrap()
    }

    #[test]
    fn logits_shape_and_degenerate_graph() {
        for kind in [ModelKind::EdgeAttention, ModelKind::Baseline] {
            let p = ModelParams::init(kind, &ModelConfig::default(), 1).unwrap();
            let g = &graphs((4, 9), 768, 2)[0];
            assert_eq!(predict(&p, g).unwrap().shape(), (1, 5));
            let logits = predict(&p, &single_node(768)).unwrap();
            assert_eq!(logits.shape(), (1, 5));
            assert!(logits.is_finite());
        }
    }

    #[test]
    fn wrong_feature_dim_is_reported() {
        let p = ModelParams::init(ModelKind::EdgeAttention, &ModelConfig::default(), 1).unwrap();
        assert!(matches!(
            predict(&p, &single_node(8)),
            Err(ModelError::FeatureDim { expected: 768, actual: 8, .. })
        ));
    }

    fn probe<'a>(p: &ModelParams, batch: &'a GraphBatch) -> impl FnMut(&[Tensor]) -> Result<Probe, ModelError> + 'a {
        let p = p.clone();
        move |tensors: &[Tensor]| {
            let q = p.with_tensors(tensors.to_vec())?;
            let out = loss_and_gradients(&q, batch, Mode::Eval)?;
            Ok(Probe {
                loss: out.loss,
                signature: out.signature,
            })
        }
    }

    #[test]
    fn gradients_match_finite_differences_on_six_nodes() {
        let g = graphs((6, 6), 768, 9).remove(0);
        assert_eq!(g.graph.num_nodes(), 6);
        let p = ModelParams::init(ModelKind::EdgeAttention, &ModelConfig::default(), 3).unwrap();
        let batch = GraphBatch::single(&g, Neighborhood::Directed).unwrap();
        let analytic = loss_and_gradients(&p, &batch, Mode::Eval).unwrap().grads;
        let options = GradCheckOptions {
            coords_per_tensor: Some(30),
            seed: 1,
            ..GradCheckOptions::default()
        };
        let report = grad_check(p.tensors(), &analytic, probe(&p, &batch), options).unwrap();
        assert!(report.checked > 300, "{report:?}");
        assert!(report.max_rel_error < 1e-4, "{report:?} worst {:?}", report.worst.map(|w| &p.names()[w.0]));
    }

    #[test]
    fn batched_gradients_match_finite_differences() {
        for (kind, attention, neighborhood) in [
            (ModelKind::Baseline, AttentionVariant::Learned, Neighborhood::Directed),
            (ModelKind::EdgeAttention, AttentionVariant::AttrMean, Neighborhood::Directed),
            (ModelKind::EdgeAttention, AttentionVariant::Learned, Neighborhood::Undirected),
        ] {
            let gs = graphs((2, 7), 5, 4);
            let refs: Vec<&FeaturedGraph> = gs.iter().take(3).collect();
            let config = ModelConfig {
                attention,
                neighborhood,
                ..small_config(5)
            };
            let p = ModelParams::init(kind, &config, 8).unwrap();
            let batch = GraphBatch::new(&refs, neighborhood).unwrap();
            let analytic = loss_and_gradients(&p, &batch, Mode::Eval).unwrap().grads;
            let report = grad_check(p.tensors(), &analytic, probe(&p, &batch), GradCheckOptions::default()).unwrap();
            assert!(report.max_rel_error < 1e-5, "{kind:?} {attention:?}: {report:?}");
        }
    }

    #[test]
    fn eval_is_bitwise_deterministic_and_train_uses_dropout() {
        let g = &graphs((5, 9), 16, 5)[1];
        let p = ModelParams::init(ModelKind::EdgeAttention, &small_config(16), 2).unwrap();
        let batch = GraphBatch::single(g, Neighborhood::Directed).unwrap();
        let a = forward(&p, &batch, Mode::Eval).unwrap();
        let b = forward(&p, &batch, Mode::Eval).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.logits()), bits(b.logits()));
        let t1 = forward(&p, &batch, Mode::Train { seed: 1 }).unwrap();
        let t1b = forward(&p, &batch, Mode::Train { seed: 1 }).unwrap();
        let t2 = forward(&p, &batch, Mode::Train { seed: 2 }).unwrap();
        assert_eq!(bits(t1.logits()), bits(t1b.logits()));
        assert_ne!(bits(t1.logits()), bits(t2.logits()));
    }

    #[test]
    fn batch_equals_individual_graphs() {
        let gs = graphs((1, 8), 12, 6);
        let p = ModelParams::init(ModelKind::EdgeAttention, &small_config(12), 2).unwrap();
        let refs: Vec<&FeaturedGraph> = gs.iter().collect();
        let batch = GraphBatch::new(&refs, Neighborhood::Directed).unwrap();
        let all = forward(&p, &batch, Mode::Eval).unwrap();
        for (i, g) in gs.iter().enumerate() {
            let one = predict(&p, g).unwrap();
            for c in 0..5 {
                assert!((all.logits().get(i, c) - one.get(0, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_sums_to_one_per_receiving_node() {
        let gs = graphs((2, 12), 10, 7);
        for kind in [AttentionVariant::Learned, AttentionVariant::AttrMean] {
            let config = ModelConfig {
                attention: kind,
                ..small_config(10)
            };
            let p = ModelParams::init(ModelKind::EdgeAttention, &config, 4).unwrap();
            for g in &gs {
                let batch = GraphBatch::single(g, Neighborhood::Directed).unwrap();
                let pass = forward(&p, &batch, Mode::Eval).unwrap();
                for k in 0..config.depth {
                    let a = pass.attention_weights(k).unwrap();
                    let mut sums = vec![0.0; g.graph.num_nodes()];
                    for (e, (t, _)) in batch.messages.pairs().enumerate() {
                        sums[t] += a.get(e, 0);
                    }
                    for (v, s) in sums.iter().enumerate() {
                        let has_in = batch.messages.tgt.contains(&v);
                        assert!(!has_in || (s - 1.0).abs() < 1e-12, "node {v} sum {s}");
                    }
                }
            }
        }
    }

    #[test]
    fn ablated_full_model_equals_baseline() {
        let config = small_config(9);
        let g = &graphs((5, 10), 9, 8)[3];
        let base = ModelParams::init(ModelKind::Baseline, &config, 5).unwrap();
        let mut full = ModelParams::init(ModelKind::EdgeAttention, &config, 6).unwrap();
        for name in base.names() {
            *full.get_mut(name).unwrap() = base.get(name).unwrap().clone();
        }
        for name in ["edge.w2", "edge.b2"] {
            let t = full.get_mut(name).unwrap();
            *t = Tensor::zeros(t.rows(), t.cols());
        }
        let w3 = full.get_mut("combine.w3").unwrap();
        *w3 = Tensor::zeros(w3.rows(), w3.cols());
        for i in 0..config.hidden {
            w3.set(i, i, 1.0);
        }
        let a = predict(&base, g).unwrap();
        let b = predict(&full, g).unwrap();
        assert_eq!(a, b);
        let table = EdgeAttrTable::compute(&full, g).unwrap();
        assert!(table.attrs.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn edge_attrs_follow_message_pairs() {
        let g = &graphs((5, 10), 7, 3)[2];
        let p = ModelParams::init(ModelKind::EdgeAttention, &small_config(7), 1).unwrap();
        let table = EdgeAttrTable::compute(&p, g).unwrap();
        for (e, &(v, u)) in table.messages.iter().enumerate() {
            for d in 0..7 {
                assert_eq!(table.raw.get(e, d), g.features.get(v, d) - g.features.get(u, d));
            }
        }
        let mut shuffled = g.clone();
        shuffled.graph.edges.reverse();
        let other = EdgeAttrTable::compute(&p, &shuffled).unwrap();
        for &(v, u) in &table.messages {
            assert_eq!(table.get(v, u), other.get(v, u));
        }
        let base = ModelParams::init(ModelKind::Baseline, &small_config(7), 1).unwrap();
        assert!(EdgeAttrTable::compute(&base, g).is_err());
    }
}
