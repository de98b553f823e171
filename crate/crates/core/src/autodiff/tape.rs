//! Reverse-mode differentiation over a fixed set of dense primitives.
//!
//! Every primitive evaluates eagerly and appends a node to the tape.
//! `backward` walks the nodes once in reverse order, releasing each
//! node's value as soon as nothing downstream can still need it.

use std::collections::HashMap;
use std::sync::Arc;

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Sparse edge-to-vertex incidence: each edge row has ones at its two
/// endpoint columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeEndpoints {
    pub pairs: Vec<(usize, usize)>,
    pub num_vertices: usize,
}

#[derive(Debug)]
enum Op<T> {
    Constant,
    Param(String),
    MatMul(Var, Var),
    /// `x·w + b`, optionally rectified.
    Linear {
        x: Var,
        w: Var,
        b: Var,
        relu: bool,
    },
    AddRow(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    ConcatCols(Var, Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    BroadcastRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        shift: Var,
        normalized: Vec<T>,
        inv_std: Vec<T>,
    },
    /// `EVᵀ × x`: edge rows summed into their endpoint vertices.
    ScatterToVertices {
        x: Var,
        endpoints: Arc<EdgeEndpoints>,
    },
    /// `EV × x`: each edge row is the sum of its endpoint vertex rows.
    GatherFromVertices {
        x: Var,
        endpoints: Arc<EdgeEndpoints>,
    },
    SegmentMean {
        x: Var,
        offsets: Vec<usize>,
    },
    /// Hidden output of a fused layer-norm LSTM step. The matching
    /// [`Op::LstmState`] node follows it and holds the new cell state.
    Lstm(Box<LstmSaved<T>>),
    LstmState(Var),
    Sum(Var),
    BceWithLogits {
        logits: Var,
        labels: Vec<T>,
    },
}

/// Handles of the parameters of one layer-norm LSTM cell. Gate order is
/// input, candidate, forget, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    /// `h×4h` recurrent part of the kernel.
    pub recurrent: Var,
    /// `4h` bias added before normalization.
    pub bias: Var,
    pub gains: [Var; 4],
    pub shifts: [Var; 4],
}

/// Input-side contribution to the gate pre-activations of an LSTM step,
/// already multiplied by the input part of the kernel.
#[derive(Debug, Clone)]
pub enum LstmInput {
    /// One `4h`-wide row per output row.
    Rows(Var),
    /// Vertex rows; output row `e` is the sum of the rows of edge `e`'s
    /// two endpoints.
    EdgeSums(Var, Arc<EdgeEndpoints>),
}

impl LstmInput {
    fn var(&self) -> Var {
        match self {
            LstmInput::Rows(v) | LstmInput::EdgeSums(v, _) => *v,
        }
    }
}

#[derive(Debug)]
struct LstmSaved<T> {
    input: LstmInput,
    hidden: Var,
    cell: Var,
    vars: LstmVars,
    /// Normalized gate pre-activations, `m×4h`.
    normalized: Vec<T>,
    /// One entry per row and gate.
    inv_std: Vec<T>,
    /// Gate activations `[σ(i), relu(j), σ(f), σ(o)]`, `m×4h`.
    gates: Vec<T>,
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, Var>,
    consumed: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn shape_err<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Error {
    Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape()))
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Records a trainable parameter. Repeated requests for the same name
    /// return the same handle.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store.value(name)?.clone();
        let v = self.push(value, Op::Param(name.to_string()), true);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        if tb.rows() != k {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, false);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg))
    }

    /// Dense layer `x·w + b`, rectified when `relu` is set.
    pub fn linear(&mut self, x: Var, w: Var, b: Var, relu: bool) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let (m, k, n) = (tx.rows(), tx.cols(), tw.cols());
        if tw.rows() != k || tb.len() != n {
            return Err(Error::shape(
                "linear",
                format!("{:?} · {:?} + {:?}", tx.shape(), tw.shape(), tb.shape()),
            ));
        }
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(tb.data());
        }
        T::gemm(m, k, n, tx.data(), false, tw.data(), false, &mut out, true);
        if relu {
            out.iter_mut().for_each(|v| *v = v.max(T::zero()));
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::Linear { x, w, b, relu }, rg))
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let n = tx.cols();
        if tb.len() != n {
            return Err(shape_err("add_row", tx, tb));
        }
        let mut out = tx.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(x, bias), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", ta, tb));
        }
        let mut out = ta.clone();
        for (o, &y) in out.data_mut().iter_mut().zip(tb.data()) {
            *o += y;
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", ta, tb));
        }
        let mut out = ta.clone();
        for (o, &y) in out.data_mut().iter_mut().zip(tb.data()) {
            *o *= y;
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        let rg = self.rg(x);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let rg = self.rg(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    /// Horizontal concatenation of two matrices with equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let m = ta.rows();
        if tb.rows() != m {
            return Err(shape_err("concat_cols", ta, tb));
        }
        let (p, q) = (ta.cols(), tb.cols());
        let mut out = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            out.extend_from_slice(ta.row(i));
            out.extend_from_slice(tb.row(i));
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, p + q, out)?, Op::ConcatCols(a, b), rg))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let (m, n) = (tx.rows(), tx.cols());
        if start + len > n || len == 0 {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {start}..{} of {n}", start + len),
            ));
        }
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&tx.row(i)[start..start + len]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(m, len, out)?, Op::SliceCols { x, start }, rg))
    }

    /// Rows `start..start + len` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let (m, n) = (tx.rows(), tx.cols());
        if start + len > m || len == 0 {
            return Err(Error::shape("slice_rows", format!("rows {start}..{} of {m}", start + len)));
        }
        let out = tx.data()[start * n..(start + len) * n].to_vec();
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(len, n, out)?, Op::SliceRows { x, start }, rg))
    }

    /// Repeats a vector as `rows` identical matrix rows.
    pub fn broadcast_rows(&mut self, v: Var, rows: usize) -> Var {
        let tv = self.value(v);
        let n = tv.len();
        let mut out = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            out.extend_from_slice(tv.data());
        }
        let rg = self.rg(v);
        let value = Tensor::matrix(rows, n, out).expect("consistent broadcast shape");
        self.push(value, Op::BroadcastRows(v), rg)
    }

    /// Per-row standardization followed by an elementwise affine map.
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, eps: T) -> Result<Var> {
        let (tx, tg, ts) = (self.value(x), self.value(gain), self.value(shift));
        let (m, d) = (tx.rows(), tx.cols());
        if tg.len() != d || ts.len() != d {
            return Err(shape_err("layer_norm", tx, tg));
        }
        let inv_d = T::one() / T::from_usize(d).expect("width fits");
        let mut normalized = Vec::with_capacity(m * d);
        let mut inv_std = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m * d);
        for i in 0..m {
            let row = tx.row(i);
            let mean = row.iter().fold(T::zero(), |a, &v| a + v) * inv_d;
            let var = row
                .iter()
                .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
                * inv_d;
            let r = T::one() / (var + eps).sqrt();
            inv_std.push(r);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * r;
                normalized.push(h);
                out.push(tg.data()[j] * h + ts.data()[j]);
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(shift);
        let op = Op::LayerNorm {
            x,
            gain,
            shift,
            normalized,
            inv_std,
        };
        Ok(self.push(Tensor::matrix(m, d, out)?, op, rg))
    }

    /// Multiplies by `EVᵀ`: every vertex receives the sum of the rows of
    /// its incident edges, accumulated in edge order.
    pub fn scatter_to_vertices(&mut self, x: Var, endpoints: &Arc<EdgeEndpoints>) -> Result<Var> {
        let tx = self.value(x);
        if tx.rows() != endpoints.pairs.len() {
            return Err(Error::shape(
                "scatter_to_vertices",
                format!("{} rows for {} edges", tx.rows(), endpoints.pairs.len()),
            ));
        }
        let d = tx.cols();
        let mut out = vec![T::zero(); endpoints.num_vertices * d];
        scatter_add(&endpoints.pairs, tx.data(), &mut out, d);
        let rg = self.rg(x);
        let value = Tensor::matrix(endpoints.num_vertices, d, out)?;
        let op = Op::ScatterToVertices {
            x,
            endpoints: Arc::clone(endpoints),
        };
        Ok(self.push(value, op, rg))
    }

    /// Multiplies by `EV`: every edge receives the sum of its two endpoint rows.
    pub fn gather_from_vertices(&mut self, x: Var, endpoints: &Arc<EdgeEndpoints>) -> Result<Var> {
        let tx = self.value(x);
        if tx.rows() != endpoints.num_vertices {
            return Err(Error::shape(
                "gather_from_vertices",
                format!("{} rows for {} vertices", tx.rows(), endpoints.num_vertices),
            ));
        }
        let d = tx.cols();
        let mut out = vec![T::zero(); endpoints.pairs.len() * d];
        gather_add(&endpoints.pairs, tx.data(), &mut out, d);
        let rg = self.rg(x);
        let value = Tensor::matrix(endpoints.pairs.len(), d, out)?;
        let op = Op::GatherFromVertices {
            x,
            endpoints: Arc::clone(endpoints),
        };
        Ok(self.push(value, op, rg))
    }

    /// Mean of each contiguous segment of a flattened tensor. `offsets`
    /// holds the `k + 1` segment boundaries.
    pub fn segment_mean(&mut self, x: Var, offsets: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let valid = offsets.len() >= 2
            && offsets[0] == 0
            && *offsets.last().unwrap() == tx.len()
            && offsets.windows(2).all(|w| w[0] < w[1]);
        if !valid {
            return Err(Error::shape(
                "segment_mean",
                format!("bad offsets for {} values", tx.len()),
            ));
        }
        let out: Vec<T> = offsets
            .windows(2)
            .map(|w| {
                let seg = &tx.data()[w[0]..w[1]];
                let len = T::from_usize(seg.len()).expect("segment length fits");
                seg.iter().fold(T::zero(), |a, &v| a + v) / len
            })
            .collect();
        let rg = self.rg(x);
        let op = Op::SegmentMean {
            x,
            offsets: offsets.to_vec(),
        };
        Ok(self.push(Tensor::vector(out), op, rg))
    }

    /// One step of a layer-norm LSTM cell with rectified candidate and
    /// output activations.
    ///
    /// The recurrent product `hidden·recurrent` and the bias are added to
    /// the input contribution, then each gate block is normalized with its
    /// own gain and shift. Returns `(hidden', cell')`.
    pub fn lstm_cell(
        &mut self,
        input: LstmInput,
        hidden: Var,
        cell: Var,
        vars: LstmVars,
        eps: T,
    ) -> Result<(Var, Var)> {
        let (tp, th, tc) = (self.value(input.var()), self.value(hidden), self.value(cell));
        let (m, h) = (th.rows(), th.cols());
        let (tr, tb) = (self.value(vars.recurrent), self.value(vars.bias));
        let rows_match = match &input {
            LstmInput::Rows(_) => tp.rows() == m,
            LstmInput::EdgeSums(_, ep) => ep.pairs.len() == m && ep.num_vertices == tp.rows(),
        };
        let ok = rows_match
            && tp.cols() == 4 * h
            && tc.shape() == th.shape()
            && tr.rows() == h
            && tr.cols() == 4 * h
            && tb.len() == 4 * h
            && vars
                .gains
                .iter()
                .chain(&vars.shifts)
                .all(|&v| self.value(v).len() == h);
        if !ok {
            return Err(Error::shape(
                "lstm_cell",
                format!(
                    "input {:?}, hidden {:?}, cell {:?}, recurrent {:?}",
                    tp.shape(),
                    th.shape(),
                    tc.shape(),
                    tr.shape()
                ),
            ));
        }
        let w = 4 * h;
        let mut z = match &input {
            LstmInput::Rows(_) => tp.data().to_vec(),
            LstmInput::EdgeSums(_, ep) => {
                let mut z = vec![T::zero(); m * w];
                gather_add(&ep.pairs, tp.data(), &mut z, w);
                z
            }
        };
        T::gemm(m, h, w, th.data(), false, tr.data(), false, &mut z, true);

        let gains: Vec<&[T]> = vars.gains.iter().map(|&v| self.value(v).data()).collect();
        let shifts: Vec<&[T]> = vars.shifts.iter().map(|&v| self.value(v).data()).collect();
        let bias = tb.data();
        let inv_h = T::one() / T::from_usize(h).expect("width fits");
        let mut normalized = z;
        let mut gates = vec![T::zero(); m * w];
        let mut inv_std = Vec::with_capacity(m * 4);
        let mut new_hidden = Vec::with_capacity(m * h);
        let mut new_cell = Vec::with_capacity(m * h);
        let rows = normalized
            .chunks_exact_mut(w)
            .zip(gates.chunks_exact_mut(w))
            .zip(tc.data().chunks_exact(h));
        for ((zrow, grow), c_prev) in rows {
            for k in 0..4 {
                let seg = &mut zrow[k * h..(k + 1) * h];
                let out = &mut grow[k * h..(k + 1) * h];
                let (gain, shift) = (gains[k], shifts[k]);
                for (v, &b) in seg.iter_mut().zip(&bias[k * h..(k + 1) * h]) {
                    *v += b;
                }
                let mean = pairwise_sum(seg) * inv_h;
                let var = seg.iter().map(|&v| (v - mean) * (v - mean));
                let var = var.fold(T::zero(), |a, x| a + x) * inv_h;
                let inv = T::one() / (var + eps).sqrt();
                inv_std.push(inv);
                for (((v, o), &g), &s) in seg.iter_mut().zip(out.iter_mut()).zip(gain).zip(shift) {
                    *v = (*v - mean) * inv;
                    *o = g * *v + s;
                }
                if k == 1 {
                    out.iter_mut().for_each(|o| *o = o.max(T::zero()));
                } else {
                    out.iter_mut().for_each(|o| *o = sigmoid(*o));
                }
            }
            let (i, rest) = grow.split_at(h);
            let (cand, rest) = rest.split_at(h);
            let (f, o) = rest.split_at(h);
            for j in 0..h {
                let c = c_prev[j] * f[j] + i[j] * cand[j];
                new_cell.push(c);
                new_hidden.push(c.max(T::zero()) * o[j]);
            }
        }

        let rg = [input.var(), hidden, cell, vars.recurrent, vars.bias]
            .iter()
            .chain(&vars.gains)
            .chain(&vars.shifts)
            .any(|&v| self.rg(v));
        let saved = LstmSaved {
            input,
            hidden,
            cell,
            vars,
            normalized,
            inv_std,
            gates,
        };
        let out_h = self.push(Tensor::matrix(m, h, new_hidden)?, Op::Lstm(Box::new(saved)), rg);
        let out_c = self.push(Tensor::matrix(m, h, new_cell)?, Op::LstmState(out_h), rg);
        Ok((out_h, out_c))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Mean binary cross entropy of logits against 0/1 labels.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[T]) -> Result<Var> {
        let tl = self.value(logits);
        if tl.len() != labels.len() || labels.is_empty() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("{} logits, {} labels", tl.len(), labels.len()),
            ));
        }
        if labels.iter().any(|&y| y != T::zero() && y != T::one()) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        let k = T::from_usize(labels.len()).expect("count fits");
        let total = tl
            .data()
            .iter()
            .zip(labels)
            .fold(T::zero(), |acc, (&x, &y)| {
                acc + x.max(T::zero()) - x * y + (-x.abs()).exp().ln_1p()
            });
        let rg = self.rg(logits);
        let op = Op::BceWithLogits {
            logits,
            labels: labels.to_vec(),
        };
        Ok(self.push(Tensor::scalar(total / k), op, rg))
    }

    /// Back-propagates from a scalar node, writing parameter gradients into
    /// `store` (parameters the loss does not reach get zero). The tape can
    /// only be differentiated once.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            ));
        }
        self.consumed = true;
        store.zero_grad();

        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);

        // Cell-state gradients of fused LSTM steps, keyed by the step's
        // hidden-output node.
        let mut state_grads: HashMap<usize, Vec<T>> = HashMap::new();

        for i in (0..=loss.0).rev() {
            let g = grads[i].take();
            let sg = state_grads.remove(&i);
            if self.nodes[i].requires_grad && (g.is_some() || sg.is_some()) {
                let g = g.unwrap_or_else(|| vec![T::zero(); self.nodes[i].value.len()]);
                self.backprop_node(i, g, sg, &mut grads, &mut state_grads, store)?;
            }
            // Consumers of node i all have larger indices and are done.
            self.nodes[i].value = Tensor::zeros(&[0]);
        }
        Ok(())
    }

    fn backprop_node(
        &self,
        i: usize,
        mut owned: Vec<T>,
        state_grad: Option<Vec<T>>,
        grads: &mut [Option<Vec<T>>],
        state_grads: &mut HashMap<usize, Vec<T>>,
        store: &mut ParamStore<T>,
    ) -> Result<()> {
        let node = &self.nodes[i];
        let zero = T::zero();
        let g: &[T] = &owned;
        match &node.op {
            Op::Constant => {}
            Op::Linear { x, w, b, relu } => {
                if *relu {
                    for (gv, &y) in owned.iter_mut().zip(node.value.data()) {
                        if y <= zero {
                            *gv = zero;
                        }
                    }
                }
                let g = &owned;
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (m, k, n) = (tx.rows(), tx.cols(), tw.cols());
                if self.rg(*w) {
                    let (buf, acc) = slot(grads, *w, k * n);
                    T::gemm(k, m, n, tx.data(), true, g, false, buf, acc);
                }
                if self.rg(*b) {
                    let (buf, acc) = slot(grads, *b, n);
                    if !acc {
                        buf.iter_mut().for_each(|v| *v = zero);
                    }
                    for row in g.chunks(n) {
                        for (s, &v) in buf.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                }
                if self.rg(*x) {
                    let (buf, acc) = slot(grads, *x, m * k);
                    T::gemm(m, n, k, g, false, tw.data(), true, buf, acc);
                }
            }
            Op::SliceRows { x, start } => {
                let n = node.value.cols();
                let (buf, acc) = slot(grads, *x, self.value(*x).len());
                if !acc {
                    buf.iter_mut().for_each(|v| *v = zero);
                }
                for (s, &v) in buf[start * n..].iter_mut().zip(g) {
                    *s += v;
                }
            }
            Op::LstmState(src) => {
                match state_grads.get_mut(&src.0) {
                    Some(buf) => add_or_set(buf, g, true),
                    None => {
                        state_grads.insert(src.0, owned);
                    }
                }
            }
            Op::Lstm(saved) => self.backprop_lstm(saved, g, state_grad, grads),
            Op::Param(name) => {
                for (s, &v) in store.grad_mut(name)?.data_mut().iter_mut().zip(g) {
                    *s += v;
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.rg(*a) {
                    // dA = dC · Bᵀ
                    let (buf, acc) = slot(grads, *a, m * k);
                    T::gemm(m, n, k, g, false, tb.data(), true, buf, acc);
                }
                if self.rg(*b) {
                    // dB = Aᵀ · dC
                    let (buf, acc) = slot(grads, *b, k * n);
                    T::gemm(k, m, n, ta.data(), true, g, false, buf, acc);
                }
            }
            Op::AddRow(x, bias) => {
                let n = self.value(*bias).len();
                if self.rg(*x) {
                    accumulate(grads, *x, g);
                }
                if self.rg(*bias) {
                    let mut gb = vec![zero; n];
                    for row in g.chunks(n) {
                        for (s, &v) in gb.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    accumulate(grads, *bias, &gb);
                }
            }
            Op::Add(a, b) => {
                if self.rg(*a) {
                    accumulate(grads, *a, g);
                }
                if self.rg(*b) {
                    accumulate(grads, *b, g);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let (buf, acc) = slot(grads, *a, ta.len());
                    for ((s, &gv), &bv) in buf.iter_mut().zip(g).zip(tb.data()) {
                        *s = if acc { *s + gv * bv } else { gv * bv };
                    }
                }
                if self.rg(*b) {
                    let (buf, acc) = slot(grads, *b, tb.len());
                    for ((s, &gv), &av) in buf.iter_mut().zip(g).zip(ta.data()) {
                        *s = if acc { *s + gv * av } else { gv * av };
                    }
                }
            }
            Op::Relu(x) => {
                let (buf, acc) = slot(grads, *x, g.len());
                for ((s, &gv), &y) in buf.iter_mut().zip(g).zip(node.value.data()) {
                    let d = if y > zero { gv } else { zero };
                    *s = if acc { *s + d } else { d };
                }
            }
            Op::Sigmoid(x) => {
                let (buf, acc) = slot(grads, *x, g.len());
                for ((s, &gv), &y) in buf.iter_mut().zip(g).zip(node.value.data()) {
                    let d = gv * y * (T::one() - y);
                    *s = if acc { *s + d } else { d };
                }
            }
            Op::ConcatCols(a, b) => {
                let (p, q) = (self.value(*a).cols(), self.value(*b).cols());
                if self.rg(*a) {
                    let (buf, acc) = slot(grads, *a, node.value.rows() * p);
                    for (dst, src) in buf.chunks_mut(p).zip(g.chunks(p + q)) {
                        add_or_set(dst, &src[..p], acc);
                    }
                }
                if self.rg(*b) {
                    let (buf, acc) = slot(grads, *b, node.value.rows() * q);
                    for (dst, src) in buf.chunks_mut(q).zip(g.chunks(p + q)) {
                        add_or_set(dst, &src[p..], acc);
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let n = self.value(*x).cols();
                let len = node.value.cols();
                let (buf, acc) = slot(grads, *x, self.value(*x).len());
                if !acc {
                    buf.iter_mut().for_each(|v| *v = zero);
                }
                for (dst, src) in buf.chunks_mut(n).zip(g.chunks(len)) {
                    for (s, &v) in dst[*start..*start + len].iter_mut().zip(src) {
                        *s += v;
                    }
                }
            }
            Op::BroadcastRows(v) => {
                let n = self.value(*v).len();
                let mut gv = vec![zero; n];
                for row in g.chunks(n) {
                    for (s, &x) in gv.iter_mut().zip(row) {
                        *s += x;
                    }
                }
                accumulate(grads, *v, &gv);
            }
            Op::LayerNorm {
                x,
                gain,
                shift,
                normalized,
                inv_std,
            } => {
                let d = node.value.cols();
                let tg = self.value(*gain).data();
                if self.rg(*gain) || self.rg(*shift) {
                    let mut dg = vec![zero; d];
                    let mut ds = vec![zero; d];
                    for (grow, hrow) in g.chunks(d).zip(normalized.chunks(d)) {
                        for j in 0..d {
                            dg[j] += grow[j] * hrow[j];
                            ds[j] += grow[j];
                        }
                    }
                    if self.rg(*gain) {
                        accumulate(grads, *gain, &dg);
                    }
                    if self.rg(*shift) {
                        accumulate(grads, *shift, &ds);
                    }
                }
                if self.rg(*x) {
                    let inv_d = T::one() / T::from_usize(d).expect("width fits");
                    let (buf, acc) = slot(grads, *x, g.len());
                    let rows = buf
                        .chunks_mut(d)
                        .zip(g.chunks(d))
                        .zip(normalized.chunks(d))
                        .zip(inv_std);
                    for (((dst, grow), hrow), &r) in rows {
                        let mut mean_dh = zero;
                        let mut mean_dh_h = zero;
                        for j in 0..d {
                            let dh = grow[j] * tg[j];
                            mean_dh += dh;
                            mean_dh_h += dh * hrow[j];
                        }
                        mean_dh *= inv_d;
                        mean_dh_h *= inv_d;
                        for j in 0..d {
                            let dh = grow[j] * tg[j];
                            let dx = r * (dh - mean_dh - hrow[j] * mean_dh_h);
                            dst[j] = if acc { dst[j] + dx } else { dx };
                        }
                    }
                }
            }
            Op::ScatterToVertices { x, endpoints } => {
                let d = node.value.cols();
                let (buf, acc) = slot(grads, *x, endpoints.pairs.len() * d);
                if !acc {
                    buf.iter_mut().for_each(|v| *v = zero);
                }
                gather_add(&endpoints.pairs, g, buf, d);
            }
            Op::GatherFromVertices { x, endpoints } => {
                let d = node.value.cols();
                let (buf, acc) = slot(grads, *x, endpoints.num_vertices * d);
                if !acc {
                    buf.iter_mut().for_each(|v| *v = zero);
                }
                scatter_add(&endpoints.pairs, g, buf, d);
            }
            Op::SegmentMean { x, offsets } => {
                let mut gx = vec![zero; self.value(*x).len()];
                for (w, &gv) in offsets.windows(2).zip(g) {
                    let len = T::from_usize(w[1] - w[0]).expect("segment length fits");
                    gx[w[0]..w[1]].iter_mut().for_each(|s| *s = gv / len);
                }
                accumulate(grads, *x, &gx);
            }
            Op::Sum(x) => {
                let gx = vec![g[0]; self.value(*x).len()];
                accumulate(grads, *x, &gx);
            }
            Op::BceWithLogits { logits, labels } => {
                let k = T::from_usize(labels.len()).expect("count fits");
                let gx: Vec<T> = self
                    .value(*logits)
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(&x, &y)| g[0] * (sigmoid(x) - y) / k)
                    .collect();
                accumulate(grads, *logits, &gx);
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Tape<T> {
    fn backprop_lstm(
        &self,
        saved: &LstmSaved<T>,
        grad_hidden: &[T],
        grad_cell: Option<Vec<T>>,
        grads: &mut [Option<Vec<T>>],
    ) {
        let zero = T::zero();
        let one = T::one();
        let LstmSaved {
            input,
            hidden,
            cell,
            vars,
            normalized,
            inv_std,
            gates,
        } = saved;
        let (th, tc) = (self.value(*hidden), self.value(*cell));
        let (m, h) = (th.rows(), th.cols());
        let w = 4 * h;
        let inv_h = one / T::from_usize(h).expect("width fits");
        let gains: Vec<&[T]> = vars.gains.iter().map(|&v| self.value(v).data()).collect();

        let mut dz = vec![zero; m * w];
        let mut d_cell_prev = vec![zero; m * h];
        let mut d_gain = vec![zero; w];
        let mut d_shift = vec![zero; w];
        for r in 0..m {
            let grow = &gates[r * w..(r + 1) * w];
            let c_prev = tc.row(r);
            let da = &mut dz[r * w..(r + 1) * w];
            for j in 0..h {
                let (i, cand, f, o) = (grow[j], grow[h + j], grow[2 * h + j], grow[3 * h + j]);
                let c = c_prev[j] * f + i * cand;
                let dh = grad_hidden[r * h + j];
                let mut dc = grad_cell.as_ref().map_or(zero, |gc| gc[r * h + j]);
                if c > zero {
                    dc += dh * o;
                }
                d_cell_prev[r * h + j] = dc * f;
                da[j] = dc * cand * i * (one - i);
                da[h + j] = if cand > zero { dc * i } else { zero };
                da[2 * h + j] = dc * c_prev[j] * f * (one - f);
                da[3 * h + j] = dh * c.max(zero) * o * (one - o);
            }
            let nrow = &normalized[r * w..(r + 1) * w];
            for k in 0..4 {
                let span = k * h..(k + 1) * h;
                let (seg, nseg) = (&mut da[span.clone()], &nrow[span.clone()]);
                let mut mean_dn = zero;
                let mut mean_dn_n = zero;
                for j in 0..h {
                    d_gain[k * h + j] += seg[j] * nseg[j];
                    d_shift[k * h + j] += seg[j];
                    let dn = seg[j] * gains[k][j];
                    mean_dn += dn;
                    mean_dn_n += dn * nseg[j];
                }
                mean_dn *= inv_h;
                mean_dn_n *= inv_h;
                let inv = inv_std[r * 4 + k];
                for j in 0..h {
                    let dn = seg[j] * gains[k][j];
                    seg[j] = inv * (dn - mean_dn - nseg[j] * mean_dn_n);
                }
            }
        }

        for k in 0..4 {
            if self.rg(vars.gains[k]) {
                accumulate(grads, vars.gains[k], &d_gain[k * h..(k + 1) * h]);
            }
            if self.rg(vars.shifts[k]) {
                accumulate(grads, vars.shifts[k], &d_shift[k * h..(k + 1) * h]);
            }
        }
        if self.rg(vars.bias) {
            let mut db = vec![zero; w];
            for row in dz.chunks(w) {
                for (s, &v) in db.iter_mut().zip(row) {
                    *s += v;
                }
            }
            accumulate(grads, vars.bias, &db);
        }
        if self.rg(vars.recurrent) {
            let (buf, acc) = slot(grads, vars.recurrent, h * w);
            T::gemm(h, m, w, th.data(), true, &dz, false, buf, acc);
        }
        if self.rg(*hidden) {
            let tr = self.value(vars.recurrent);
            let (buf, acc) = slot(grads, *hidden, m * h);
            T::gemm(m, w, h, &dz, false, tr.data(), true, buf, acc);
        }
        if self.rg(*cell) {
            accumulate_owned(grads, *cell, d_cell_prev);
        }
        match input {
            LstmInput::Rows(v) if self.rg(*v) => accumulate_owned(grads, *v, dz),
            LstmInput::EdgeSums(v, ep) if self.rg(*v) => {
                let (buf, acc) = slot(grads, *v, ep.num_vertices * w);
                if !acc {
                    buf.iter_mut().for_each(|x| *x = zero);
                }
                scatter_add(&ep.pairs, &dz, buf, w);
            }
            _ => {}
        }
    }
}

/// Gradient buffer for `v`, allocating it on first use. The flag tells
/// whether the buffer already holds a partial gradient.
fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> (&mut [T], bool) {
    let existed = grads[v.0].is_some();
    let buf = grads[v.0].get_or_insert_with(|| vec![T::zero(); len]);
    (buf.as_mut_slice(), existed)
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, g: &[T]) {
    match &mut grads[v.0] {
        Some(buf) => add_or_set(buf, g, true),
        none => *none = Some(g.to_vec()),
    }
}

fn accumulate_owned<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
    match &mut grads[v.0] {
        Some(buf) => add_or_set(buf, &g, true),
        none => *none = Some(g),
    }
}

fn add_or_set<T: Scalar>(dst: &mut [T], src: &[T], acc: bool) {
    if acc {
        for (d, &s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    } else {
        dst.copy_from_slice(src);
    }
}

/// Sum with four interleaved accumulators.
fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = xs.chunks_exact(4);
    let tail = chunks.remainder();
    for c in chunks {
        for (a, &x) in acc.iter_mut().zip(c) {
            *a += x;
        }
    }
    let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for &x in tail {
        total += x;
    }
    total
}

fn scatter_add<T: Scalar>(pairs: &[(usize, usize)], edge_rows: &[T], vertex_rows: &mut [T], d: usize) {
    for (e, &(s, t)) in pairs.iter().enumerate() {
        let src = &edge_rows[e * d..(e + 1) * d];
        for (o, &v) in vertex_rows[s * d..(s + 1) * d].iter_mut().zip(src) {
            *o += v;
        }
        for (o, &v) in vertex_rows[t * d..(t + 1) * d].iter_mut().zip(src) {
            *o += v;
        }
    }
}

fn gather_add<T: Scalar>(pairs: &[(usize, usize)], vertex_rows: &[T], edge_rows: &mut [T], d: usize) {
    for (e, &(s, t)) in pairs.iter().enumerate() {
        let dst = &mut edge_rows[e * d..(e + 1) * d];
        let (vs, vt) = (&vertex_rows[s * d..(s + 1) * d], &vertex_rows[t * d..(t + 1) * d]);
        for ((o, &a), &b) in dst.iter_mut().zip(vs).zip(vt) {
            *o += a + b;
        }
    }
}
