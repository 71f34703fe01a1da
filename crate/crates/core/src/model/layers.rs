//! Tape-level building blocks of one message-passing layer.

use std::sync::Arc;

use crate::numerics::{Index, NumericsError, Tape, Tensor, Var};

/// Message pairs of a batch: the state of `nbr[e]` flows into `tgt[e]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Messages {
    pub tgt: Index,
    pub nbr: Index,
}

impl Messages {
    pub fn new(pairs: &[(usize, usize)]) -> Self {
        Self {
            tgt: pairs.iter().map(|p| p.0).collect::<Vec<_>>().into(),
            nbr: pairs.iter().map(|p| p.1).collect::<Vec<_>>().into(),
        }
    }

    pub fn len(&self) -> usize {
        self.tgt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tgt.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.tgt.iter().copied().zip(self.nbr.iter().copied())
    }
}

/// Row `e` is `x[tgt[e]] − x[nbr[e]]`.
pub fn edge_differences(x: &Tensor, messages: &Messages) -> Tensor {
    let mut out = Tensor::zeros(messages.len(), x.cols());
    for (e, (v, u)) in messages.pairs().enumerate() {
        for ((o, a), b) in out.row_mut(e).iter_mut().zip(x.row(v)).zip(x.row(u)) {
            *o = a - b;
        }
    }
    out
}

/// `relu(r·W1 + b1)·W2 + b2`.
pub fn edge_mlp(tape: &mut Tape, r: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var, NumericsError> {
    let hidden = tape.affine(r, w1, Some(b1))?;
    let hidden = tape.relu(hidden)?;
    tape.affine(hidden, w2, Some(b2))
}

/// Pre-activation mean-aggregator update `h·W_self + mean_{u∈N(v)} h_u·W_neigh`.
/// Nodes without neighbors get only the self term.
pub fn sage_conv(
    tape: &mut Tape,
    h: Var,
    w_self: Var,
    w_neigh: Var,
    messages: &Messages,
) -> Result<Var, NumericsError> {
    let n = tape.value(h).rows();
    let own = tape.matmul(h, w_self)?;
    let gathered = tape.gather_rows(h, Arc::clone(&messages.nbr))?;
    let mean = tape.scatter_mean(gathered, Arc::clone(&messages.tgt), n)?;
    let neigh = tape.matmul(mean, w_neigh)?;
    tape.add(own, neigh)
}

/// Multi-head attention over incoming edges.
///
/// Returns the per-node context (`N×edge_hidden`) and the per-message weights
/// (`E×1`), which sum to one over each node's incoming messages.
pub fn edge_attention(
    tape: &mut Tape,
    h: Var,
    attrs: Var,
    w_q: Var,
    w_k: Var,
    heads: usize,
    messages: &Messages,
) -> Result<(Var, Var), NumericsError> {
    let n = tape.value(h).rows();
    let hidden = tape.value(w_q).cols();
    let q = tape.matmul(h, w_q)?;
    let k = tape.matmul(h, w_k)?;
    let qv = tape.gather_rows(q, Arc::clone(&messages.tgt))?;
    let ku = tape.gather_rows(k, Arc::clone(&messages.nbr))?;
    let scale = 1.0 / ((hidden / heads) as f64).sqrt();
    let logits = tape.head_dot(qv, ku, heads, scale)?;
    let weights = tape.segment_softmax(logits, Arc::clone(&messages.tgt), n)?;
    let weighted = tape.scale_rows(attrs, weights)?;
    let context = tape.scatter_sum(weighted, Arc::clone(&messages.tgt), n)?;
    Ok((context, weights))
}

/// Weights from a softmax over each edge attribute's mean, context as the
/// mean of the weighted attributes.
pub fn mean_edge_attention(tape: &mut Tape, attrs: Var, messages: &Messages, n: usize) -> Result<(Var, Var), NumericsError> {
    let scores = tape.row_mean(attrs)?;
    let weights = tape.segment_softmax(scores, Arc::clone(&messages.tgt), n)?;
    let weighted = tape.scale_rows(attrs, weights)?;
    let context = tape.scatter_mean(weighted, Arc::clone(&messages.tgt), n)?;
    Ok((context, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn differences_subtract_neighbor_from_target() {
        let x = t(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let r = edge_differences(&x, &Messages::new(&[(0, 1)]));
        assert_eq!(r.data(), &[1.0, -1.0, 0.0]);
    }

    #[test]
    fn equal_endpoints_give_bias_path() {
        let mut tape = Tape::new();
        let r = tape.leaf(Tensor::zeros(1, 2));
        let w1 = tape.leaf(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b1 = tape.leaf(t(&[&[0.5, -1.0]]));
        let w2 = tape.leaf(t(&[&[2.0, 0.0], &[0.0, 2.0]]));
        let b2 = tape.leaf(t(&[&[0.25, 0.25]]));
        let out = edge_mlp(&mut tape, r, w1, b1, w2, b2).unwrap();
        // relu([0.5, −1])·W2 + b2
        assert_eq!(tape.value(out).data(), &[1.25, 0.25]);
    }

    #[test]
    fn one_dimensional_sage() {
        let mut tape = Tape::new();
        let h = tape.leaf(t(&[&[1.0], &[3.0], &[5.0]]));
        let w = tape.leaf(Tensor::identity(1));
        let out = sage_conv(&mut tape, h, w, w, &Messages::new(&[(0, 1), (0, 2)])).unwrap();
        assert_eq!(tape.value(out).data(), &[5.0, 3.0, 5.0]);
    }

    #[test]
    fn singleton_and_symmetric_attention() {
        let mut tape = Tape::new();
        let h = tape.leaf(t(&[&[0.3, -0.2], &[0.7, 0.1], &[0.7, 0.1]]));
        let w = tape.leaf(t(&[&[1.0, 2.0], &[-1.0, 0.5]]));
        let attrs = tape.leaf(t(&[&[1.0, 2.0], &[3.0, -4.0]]));
        let two = Messages::new(&[(0, 1), (0, 2)]);
        let (ctx, a) = edge_attention(&mut tape, h, attrs, w, w, 2, &two).unwrap();
        assert_eq!(tape.value(a).data(), &[0.5, 0.5]);
        assert_eq!(tape.value(ctx).row(0), &[2.0, -1.0]);
        assert_eq!(tape.value(ctx).row(1), &[0.0, 0.0]);

        let mut tape = Tape::new();
        let h = tape.leaf(t(&[&[0.3, -0.2], &[0.7, 0.1]]));
        let w = tape.leaf(t(&[&[1.0, 2.0], &[-1.0, 0.5]]));
        let attrs = tape.leaf(t(&[&[1.5, -2.5]]));
        let (ctx, a) = edge_attention(&mut tape, h, attrs, w, w, 2, &Messages::new(&[(0, 1)])).unwrap();
        assert_eq!(tape.value(a).data(), &[1.0]);
        assert_eq!(tape.value(ctx).row(0), &[1.5, -2.5]);
    }
}
