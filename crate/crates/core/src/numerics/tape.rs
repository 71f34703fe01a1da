//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends one node holding its forward value. Nodes only
//! refer to earlier nodes, so walking the tape backwards from the loss is a
//! reverse topological order and each op is visited once.

use std::sync::Arc;

use super::tensor::{gemm, softmax_rows};
use super::{NumericsError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Shared row-index list (edge endpoints, segment ids) used by gather and
/// scatter ops.
pub type Index = Arc<[usize]>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Mask(Var, Tensor),
    GatherRows(Var, Index),
    ScatterSum {
        src: Var,
        index: Index,
    },
    ScatterMean {
        src: Var,
        index: Index,
        counts: Vec<usize>,
    },
    HeadDot {
        a: Var,
        b: Var,
        heads: usize,
        scale: f64,
    },
    RowMean(Var),
    SegmentSoftmax {
        x: Var,
        segment: Index,
    },
    ScaleRows(Var, Var),
    ConcatCols(Var, Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor,
    },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded computation for one forward pass.
pub struct Tape {
    nodes: Vec<Node>,
    activation_hash: u64,
}

/// Gradients of a scalar with respect to every recorded value.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            activation_hash: FNV_OFFSET,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Fingerprint of every ReLU on/off pattern recorded so far. Two forward
    /// passes with the same fingerprint took the same piecewise-linear branch.
    pub fn activation_signature(&self) -> u64 {
        self.activation_hash
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var, NumericsError> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> NumericsError {
        NumericsError::ShapeMismatch {
            op,
            left: self.shape(a),
            right: self.shape(b),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.value(a).matmul(self.value(b)).map_err(|_| self.mismatch("matmul", a, b))?;
        self.push("matmul", value, Op::MatMul(a, b))
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, NumericsError> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_row_bias(y, b),
            None => Ok(y),
        }
    }

    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var, NumericsError> {
        let (xs, bs) = (self.shape(x), self.shape(bias));
        if bs.0 != 1 || bs.1 != xs.1 {
            return Err(self.mismatch("add_row_bias", x, bias));
        }
        let mut value = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for r in 0..xs.0 {
            for (y, bv) in value.row_mut(r).iter_mut().zip(&b) {
                *y += bv;
            }
        }
        self.push("add_row_bias", value, Op::AddRowBias(x, bias))
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NumericsError> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch(name, a, b));
        }
        let (r, c) = self.shape(a);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::from_vec(r, c, data)?;
        self.push(name, value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, NumericsError> {
        let value = self.value(x).map(|v| v * factor);
        self.push("scale", value, Op::Scale(x, factor))
    }

    /// Elementwise `max(0, x)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Result<Var, NumericsError> {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let mut h = self.activation_hash;
        for &v in self.value(x).data() {
            h ^= u64::from(v > 0.0);
            h = h.wrapping_mul(FNV_PRIME);
        }
        self.activation_hash = h;
        self.push("relu", value, Op::Relu(x))
    }

    /// Elementwise product with a constant mask (used for dropout).
    pub fn mask(&mut self, x: Var, mask: Tensor) -> Result<Var, NumericsError> {
        if mask.shape() != self.shape(x) {
            return Err(NumericsError::ShapeMismatch {
                op: "mask",
                left: self.shape(x),
                right: mask.shape(),
            });
        }
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(mask.data())
            .map(|(a, m)| a * m)
            .collect();
        let (r, c) = self.shape(x);
        let value = Tensor::from_vec(r, c, data)?;
        self.push("mask", value, Op::Mask(x, mask))
    }

    /// Inverted dropout. Identity when `training` is false or `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, seed: u64, training: bool) -> Result<Var, NumericsError> {
        if !(0.0..1.0).contains(&p) {
            return Err(NumericsError::InvalidProbability(p));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let (r, c) = self.shape(x);
        let mask = super::dropout::dropout_mask(r, c, p, seed)?;
        self.mask(x, mask)
    }

    /// Row `i` of the output is row `index[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, index: Index) -> Result<Var, NumericsError> {
        let (rows, cols) = self.shape(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(NumericsError::IndexOutOfRange { index: bad, len: rows });
        }
        let src = self.value(x);
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            data.extend_from_slice(src.row(i));
        }
        let value = Tensor::from_vec(index.len(), cols, data)?;
        self.push("gather_rows", value, Op::GatherRows(x, index))
    }

    fn check_scatter(&self, src: Var, index: &Index, out_rows: usize) -> Result<(), NumericsError> {
        if index.len() != self.shape(src).0 {
            return Err(NumericsError::Length {
                expected: self.shape(src).0,
                actual: index.len(),
            });
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= out_rows) {
            return Err(NumericsError::IndexOutOfRange {
                index: bad,
                len: out_rows,
            });
        }
        Ok(())
    }

    /// Output row `j` is the sum of the `src` rows `i` with `index[i] == j`.
    pub fn scatter_sum(&mut self, src: Var, index: Index, out_rows: usize) -> Result<Var, NumericsError> {
        self.check_scatter(src, &index, out_rows)?;
        let s = self.value(src);
        let mut value = Tensor::zeros(out_rows, s.cols());
        for (i, &j) in index.iter().enumerate() {
            for (o, v) in value.row_mut(j).iter_mut().zip(s.row(i)) {
                *o += v;
            }
        }
        self.push("scatter_sum", value, Op::ScatterSum { src, index })
    }

    /// Like [`Tape::scatter_sum`] but divided by the number of contributing
    /// rows. Rows with no contributions are the zero vector.
    pub fn scatter_mean(&mut self, src: Var, index: Index, out_rows: usize) -> Result<Var, NumericsError> {
        self.check_scatter(src, &index, out_rows)?;
        let mut counts = vec![0usize; out_rows];
        for &j in index.iter() {
            counts[j] += 1;
        }
        let s = self.value(src);
        let mut value = Tensor::zeros(out_rows, s.cols());
        for (i, &j) in index.iter().enumerate() {
            for (o, v) in value.row_mut(j).iter_mut().zip(s.row(i)) {
                *o += v;
            }
        }
        for (j, &n) in counts.iter().enumerate() {
            if n > 1 {
                let inv = 1.0 / n as f64;
                for o in value.row_mut(j) {
                    *o *= inv;
                }
            }
        }
        self.push("scatter_mean", value, Op::ScatterMean { src, index, counts })
    }

    /// Per-row multi-head bilinear score: the columns of `a` and `b` are split
    /// into `heads` equal blocks, each block contributes `scale · ⟨a_j, b_j⟩`,
    /// and the output (`E×1`) is the mean over heads.
    pub fn head_dot(&mut self, a: Var, b: Var, heads: usize, scale: f64) -> Result<Var, NumericsError> {
        let (rows, cols) = self.shape(a);
        if self.shape(b) != (rows, cols) || heads == 0 || cols % heads != 0 {
            return Err(self.mismatch("head_dot", a, b));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let factor = scale / heads as f64;
        let data = (0..rows)
            .map(|r| {
                let dot: f64 = av.row(r).iter().zip(bv.row(r)).map(|(x, y)| x * y).sum();
                dot * factor
            })
            .collect();
        let value = Tensor::from_vec(rows, 1, data)?;
        self.push("head_dot", value, Op::HeadDot { a, b, heads, scale })
    }

    /// Mean over columns, giving an `N×1` tensor.
    pub fn row_mean(&mut self, x: Var) -> Result<Var, NumericsError> {
        let (rows, cols) = self.shape(x);
        if cols == 0 {
            return Err(NumericsError::ShapeMismatch {
                op: "row_mean",
                left: (rows, cols),
                right: (rows, 1),
            });
        }
        let v = self.value(x);
        let data = (0..rows).map(|r| v.row(r).iter().sum::<f64>() / cols as f64).collect();
        let value = Tensor::from_vec(rows, 1, data)?;
        self.push("row_mean", value, Op::RowMean(x))
    }

    /// Softmax of an `E×1` column taken separately within each group of rows
    /// sharing the same `segment` id.
    pub fn segment_softmax(&mut self, x: Var, segment: Index, segments: usize) -> Result<Var, NumericsError> {
        let (rows, cols) = self.shape(x);
        if cols != 1 {
            return Err(NumericsError::ShapeMismatch {
                op: "segment_softmax",
                left: (rows, cols),
                right: (rows, 1),
            });
        }
        self.check_scatter(x, &segment, segments)?;
        let xv = self.value(x).data();
        let mut max = vec![f64::NEG_INFINITY; segments];
        for (i, &s) in segment.iter().enumerate() {
            max[s] = max[s].max(xv[i]);
        }
        let mut exp: Vec<f64> = segment.iter().enumerate().map(|(i, &s)| (xv[i] - max[s]).exp()).collect();
        let mut total = vec![0.0; segments];
        for (i, &s) in segment.iter().enumerate() {
            total[s] += exp[i];
        }
        for (i, &s) in segment.iter().enumerate() {
            exp[i] /= total[s];
        }
        let value = Tensor::from_vec(rows, 1, exp)?;
        self.push("segment_softmax", value, Op::SegmentSoftmax { x, segment })
    }

    /// Multiplies row `i` of `x` by the scalar `s[i]` (`s` is `E×1`).
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var, NumericsError> {
        let (rows, _) = self.shape(x);
        if self.shape(s) != (rows, 1) {
            return Err(self.mismatch("scale_rows", x, s));
        }
        let mut value = self.value(x).clone();
        let sv = self.value(s).data().to_vec();
        for (r, w) in sv.iter().enumerate() {
            for v in value.row_mut(r) {
                *v *= w;
            }
        }
        self.push("scale_rows", value, Op::ScaleRows(x, s))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let ((ra, ca), (rb, cb)) = (self.shape(a), self.shape(b));
        if ra != rb {
            return Err(self.mismatch("concat_cols", a, b));
        }
        let mut value = Tensor::zeros(ra, ca + cb);
        for r in 0..ra {
            let row = value.row_mut(r);
            row[..ca].copy_from_slice(self.nodes[a.0].value.row(r));
            row[ca..].copy_from_slice(self.nodes[b.0].value.row(r));
        }
        self.push("concat_cols", value, Op::ConcatCols(a, b))
    }

    /// Mean over rows of `−log softmax(logits_r)[labels[r]]`, evaluated in
    /// log-sum-exp form. Output is `1×1`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, NumericsError> {
        let (rows, classes) = self.shape(logits);
        if labels.len() != rows || rows == 0 {
            return Err(NumericsError::Length {
                expected: rows,
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(NumericsError::LabelOutOfRange { label: bad, classes });
        }
        let z = self.value(logits);
        let mut loss = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = z.row(r);
            let top = (0..classes).fold(0, |b, i| if row[i] > row[b] { i } else { b });
            let max = row[top];
            // ln Σ exp(v − max) = ln(1 + Σ_{i≠top} exp(v_i − max))
            let rest: f64 = row
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != top)
                .map(|(_, v)| (v - max).exp())
                .sum();
            loss += (max - row[label]) + rest.ln_1p();
        }
        let probs = softmax_rows(z);
        let value = Tensor::scalar(loss / rows as f64);
        self.push(
            "cross_entropy",
            value,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, NumericsError> {
        let value = Tensor::scalar(self.value(x).sum());
        self.push("sum", value, Op::Sum(x))
    }

    /// Reverse accumulation from a `1×1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients, NumericsError> {
        if self.shape(output) != (1, 1) {
            return Err(NumericsError::ShapeMismatch {
                op: "backward",
                left: self.shape(output),
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::scalar(1.0));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = slot(&mut grads, *a, av.shape());
                    gemm(ga, &g, false, bv, true, 1.0);
                    let gb = slot(&mut grads, *b, bv.shape());
                    gemm(gb, av, true, &g, false, 1.0);
                }
                Op::AddRowBias(x, b) => {
                    let gb = slot(&mut grads, *b, self.shape(*b));
                    for r in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    slot(&mut grads, *x, g.shape()).add_assign(&g);
                }
                Op::Add(a, b) => {
                    slot(&mut grads, *a, g.shape()).add_assign(&g);
                    slot(&mut grads, *b, g.shape()).add_assign(&g);
                }
                Op::Sub(a, b) => {
                    slot(&mut grads, *a, g.shape()).add_assign(&g);
                    let gb = slot(&mut grads, *b, g.shape());
                    for (o, v) in gb.data_mut().iter_mut().zip(g.data()) {
                        *o -= v;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = slot(&mut grads, *a, g.shape());
                    for ((o, gv), y) in ga.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *o += gv * y;
                    }
                    let gb = slot(&mut grads, *b, g.shape());
                    for ((o, gv), x) in gb.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *o += gv * x;
                    }
                }
                Op::Scale(x, f) => {
                    let gx = slot(&mut grads, *x, g.shape());
                    for (o, gv) in gx.data_mut().iter_mut().zip(g.data()) {
                        *o += gv * f;
                    }
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let gx = slot(&mut grads, *x, g.shape());
                    for ((o, gv), v) in gx.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        if *v > 0.0 {
                            *o += gv;
                        }
                    }
                }
                Op::Mask(x, mask) => {
                    let gx = slot(&mut grads, *x, g.shape());
                    for ((o, gv), m) in gx.data_mut().iter_mut().zip(g.data()).zip(mask.data()) {
                        *o += gv * m;
                    }
                }
                Op::GatherRows(x, index) => {
                    let gx = slot(&mut grads, *x, self.shape(*x));
                    for (r, &src) in index.iter().enumerate() {
                        for (o, v) in gx.row_mut(src).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                Op::ScatterSum { src, index } => {
                    let gs = slot(&mut grads, *src, self.shape(*src));
                    for (r, &dst) in index.iter().enumerate() {
                        for (o, v) in gs.row_mut(r).iter_mut().zip(g.row(dst)) {
                            *o += v;
                        }
                    }
                }
                Op::ScatterMean { src, index, counts } => {
                    let gs = slot(&mut grads, *src, self.shape(*src));
                    for (r, &dst) in index.iter().enumerate() {
                        let inv = 1.0 / counts[dst] as f64;
                        for (o, v) in gs.row_mut(r).iter_mut().zip(g.row(dst)) {
                            *o += v * inv;
                        }
                    }
                }
                Op::HeadDot { a, b, heads, scale } => {
                    let factor = scale / *heads as f64;
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = slot(&mut grads, *a, av.shape());
                    for r in 0..g.rows() {
                        let w = g.get(r, 0) * factor;
                        for (o, y) in ga.row_mut(r).iter_mut().zip(bv.row(r)) {
                            *o += w * y;
                        }
                    }
                    let gb = slot(&mut grads, *b, bv.shape());
                    for r in 0..g.rows() {
                        let w = g.get(r, 0) * factor;
                        for (o, x) in gb.row_mut(r).iter_mut().zip(av.row(r)) {
                            *o += w * x;
                        }
                    }
                }
                Op::RowMean(x) => {
                    let (rows, cols) = self.shape(*x);
                    let gx = slot(&mut grads, *x, (rows, cols));
                    for r in 0..rows {
                        let w = g.get(r, 0) / cols as f64;
                        for o in gx.row_mut(r) {
                            *o += w;
                        }
                    }
                }
                Op::SegmentSoftmax { x, segment } => {
                    let p = node.value.data();
                    let segments = segment.iter().copied().max().map_or(0, |m| m + 1);
                    let mut inner = vec![0.0; segments];
                    for (i, &s) in segment.iter().enumerate() {
                        inner[s] += g.data()[i] * p[i];
                    }
                    let gx = slot(&mut grads, *x, g.shape());
                    for (i, &s) in segment.iter().enumerate() {
                        gx.data_mut()[i] += p[i] * (g.data()[i] - inner[s]);
                    }
                }
                Op::ScaleRows(x, s) => {
                    let (xv, sv) = (self.value(*x), self.value(*s));
                    let gs = slot(&mut grads, *s, sv.shape());
                    for r in 0..g.rows() {
                        let dot: f64 = g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum();
                        gs.data_mut()[r] += dot;
                    }
                    let gx = slot(&mut grads, *x, xv.shape());
                    for r in 0..g.rows() {
                        let w = sv.data()[r];
                        for (o, v) in gx.row_mut(r).iter_mut().zip(g.row(r)) {
                            *o += w * v;
                        }
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.shape(*a).1;
                    let ga = slot(&mut grads, *a, self.shape(*a));
                    for r in 0..g.rows() {
                        for (o, v) in ga.row_mut(r).iter_mut().zip(&g.row(r)[..ca]) {
                            *o += v;
                        }
                    }
                    let gb = slot(&mut grads, *b, self.shape(*b));
                    for r in 0..g.rows() {
                        for (o, v) in gb.row_mut(r).iter_mut().zip(&g.row(r)[ca..]) {
                            *o += v;
                        }
                    }
                }
                Op::CrossEntropy { logits, labels, probs } => {
                    let w = g.get(0, 0) / labels.len() as f64;
                    let gl = slot(&mut grads, *logits, probs.shape());
                    for (r, &label) in labels.iter().enumerate() {
                        for (c, (o, p)) in gl.row_mut(r).iter_mut().zip(probs.row(r)).enumerate() {
                            let target = if c == label { 1.0 } else { 0.0 };
                            *o += w * (p - target);
                        }
                    }
                }
                Op::Sum(x) => {
                    let w = g.get(0, 0);
                    let gx = slot(&mut grads, *x, self.shape(*x));
                    for o in gx.data_mut() {
                        *o += w;
                    }
                }
            }
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }

        grads.resize(self.nodes.len(), None);
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.is_finite() {
                    return Err(NumericsError::NonFiniteGradient { index: i });
                }
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }
}

fn slot(grads: &mut [Option<Tensor>], v: Var, shape: (usize, usize)) -> &mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(v: &[usize]) -> Index {
        Arc::from(v)
    }

    #[test]
    fn affine_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row_vector(&[1.0, 2.0]));
        let w = tape.leaf(Tensor::identity(2));
        let y = tape.affine(x, w, None).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);

        let x = tape.leaf(Tensor::row_vector(&[1.0, -1.0]));
        let w = tape.leaf(Tensor::from_rows(&[[2.0], [3.0]]).unwrap());
        let b = tape.leaf(Tensor::row_vector(&[1.0]));
        let y = tape.affine(x, w, Some(b)).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0]);

        let bad = tape.leaf(Tensor::zeros(3, 1));
        assert!(matches!(tape.matmul(x, bad), Err(NumericsError::ShapeMismatch { .. })));
    }

    #[test]
    fn relu_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row_vector(&[-1.0, 0.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        // subgradient at 0 is 0
        assert_eq!(g.wrt(x).data(), &[0.0, 0.0, 1.0]);

        let x = tape.leaf(Tensor::row_vector(&[-3.0, -0.5]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row_vector(&[f64::MAX]));
        let err = tape.scale(x, 10.0).unwrap_err();
        assert!(matches!(err, NumericsError::NonFinite { op: "scale" }));
    }

    #[test]
    fn scatter_mean_of_empty_segment_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[[3.0], [5.0]]).unwrap());
        let m = tape.scatter_mean(x, idx(&[0, 0]), 2).unwrap();
        assert_eq!(tape.value(m).data(), &[4.0, 0.0]);
    }

    #[test]
    fn segment_softmax_normalizes_per_segment() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(5, 1, vec![1.0, 2.0, 0.5, -1.0, 3.0]).unwrap());
        let p = tape.segment_softmax(x, idx(&[0, 1, 0, 1, 2]), 4).unwrap();
        let pv = tape.value(p).data();
        assert!((pv[0] + pv[2] - 1.0).abs() < 1e-15);
        assert!((pv[1] + pv[3] - 1.0).abs() < 1e-15);
        assert_eq!(pv[4], 1.0);
    }

    #[test]
    fn cross_entropy_examples() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::zeros(1, 5));
        let l = tape.cross_entropy(z, &[3]).unwrap();
        assert!((tape.value(l).get(0, 0) - 5f64.ln()).abs() < 1e-15);

        let z = tape.leaf(Tensor::row_vector(&[10.0, 0.0, 0.0, 0.0, 0.0]));
        let l = tape.cross_entropy(z, &[0]).unwrap();
        // log(1 + 4e^-10) evaluated with a series expansion as the oracle
        let t = 4.0 * (-10f64).exp();
        let oracle = t - t * t / 2.0 + t * t * t / 3.0;
        assert!((tape.value(l).get(0, 0) - oracle).abs() < 1e-15);
        assert!((tape.value(l).get(0, 0) - 1.816e-4).abs() < 1e-7);

        assert!(matches!(
            tape.cross_entropy(z, &[5]),
            Err(NumericsError::LabelOutOfRange { label: 5, classes: 5 })
        ));
    }

    #[test]
    fn shared_input_accumulates_gradient() {
        // f = sum(x * x) => df/dx = 2x
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row_vector(&[1.5, -2.0]));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).data(), &[3.0, -4.0]);
    }
}
