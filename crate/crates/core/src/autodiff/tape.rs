use std::sync::Arc;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Col,
    Scalar,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, f64),
    Relu(Var),
    Exp(Var),
    Log(Var),
    ClampMin(Var, f64),
    RowSoftmax(Var),
    RowLogSoftmax(Var),
    RowL2Normalize(Var, f64),
    Transpose(Var),
    GatherRows(Var, Vec<usize>),
    GatherEntries(Var, Vec<(usize, usize)>),
    Sum(Var),
    Mean(Var),
    MaskedMean(Var, Vec<usize>),
    AggregateMean(Var, Arc<Graph>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of executed operations for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so the vector itself is a
/// topological order. Gradients accumulate on leaves marked `requires_grad`
/// across repeated [`Tape::backward`] calls until [`Tape::zero_grad`].
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric { op })
    }
}

fn broadcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    let (r, c) = (a.rows(), a.cols());
    if b.rows() == r && b.cols() == c {
        Ok(Broadcast::Same)
    } else if b.numel() == 1 {
        Ok(Broadcast::Scalar)
    } else if b.rows() == 1 && b.cols() == c {
        Ok(Broadcast::Row)
    } else if b.rank() == 2 && b.cols() == 1 && b.rows() == r {
        Ok(Broadcast::Col)
    } else {
        Err(Error::shape(
            op,
            format!("cannot broadcast {:?} onto {:?}", b.shape(), a.shape()),
        ))
    }
}

#[inline]
fn bcast_index(kind: Broadcast, idx: usize, cols: usize) -> usize {
    match kind {
        Broadcast::Same => idx,
        Broadcast::Row => idx % cols,
        Broadcast::Col => idx / cols,
        Broadcast::Scalar => 0,
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        check_finite(name, &value)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    /// Input value that gradients flow into.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input value treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, k2, n) = (av.rows(), av.cols(), bv.rows(), bv.cols());
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut out, 0.0);
        self.record("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b])
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(Broadcast) -> Op,
    ) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let kind = broadcast_kind(name, av, bv)?;
        let cols = av.cols();
        let bd = bv.data();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bd[bcast_index(kind, i, cols)]))
            .collect();
        let value = Tensor::from_parts(av.shape().to_vec(), data);
        self.record(name, value, op(kind), &[a, b])
    }

    /// `a + b`; `b` may be the same shape, a row vector, a column vector or a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, |k| Op::Add(a, b, k))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, |k| Op::Sub(a, b, k))
    }

    /// Elementwise product with the same broadcasting rules as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, |k| Op::Mul(a, b, k))
    }

    fn unary(
        &mut self,
        name: &'static str,
        a: Var,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let av = self.value(a);
        let value = Tensor::from_parts(av.shape().to_vec(), av.data().iter().map(|&x| f(x)).collect());
        self.record(name, value, op, &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.unary("scale", a, |x| x * s, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, Op::Exp(a))
    }

    /// Natural log; non-positive inputs are a numeric error.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary("log", a, f64::ln, Op::Log(a))
    }

    /// `max(a, lo)`; the gradient is zero where the clamp is active.
    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Result<Var> {
        self.unary("clamp_min", a, |x| x.max(lo), Op::ClampMin(a, lo))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let cols = av.cols();
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let value = Tensor::from_parts(av.shape().to_vec(), data);
        self.record("row_softmax", value, Op::RowSoftmax(a), &[a])
    }

    /// Row-wise `x - logsumexp(x)`, computed with the max-subtraction trick.
    pub fn row_log_softmax(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let cols = av.cols();
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let value = Tensor::from_parts(av.shape().to_vec(), data);
        self.record("row_log_softmax", value, Op::RowLogSoftmax(a), &[a])
    }

    /// Divides each row by `max(norm, eps)`.
    pub fn row_l2_normalize(&mut self, a: Var, eps: f64) -> Result<Var> {
        let av = self.value(a);
        let cols = av.cols();
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(cols) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(eps);
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        let value = Tensor::from_parts(av.shape().to_vec(), data);
        self.record("row_l2_normalize", value, Op::RowL2Normalize(a, eps), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let (r, c) = (av.rows(), av.cols());
        let src = av.data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        self.record("transpose", Tensor::from_parts(vec![c, r], data), Op::Transpose(a), &[a])
    }

    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if index.is_empty() {
            return Err(Error::shape("gather_rows", "empty index"));
        }
        if let Some(&bad) = index.iter().find(|&&r| r >= av.rows()) {
            return Err(Error::Index {
                index: bad,
                len: av.rows(),
            });
        }
        let value = av.select_rows(index);
        self.record("gather_rows", value, Op::GatherRows(a, index.to_vec()), &[a])
    }

    /// Vector of `a[r, c]` for each `(r, c)` in `index`.
    pub fn gather_entries(&mut self, a: Var, index: &[(usize, usize)]) -> Result<Var> {
        let av = self.value(a);
        if index.is_empty() {
            return Err(Error::shape("gather_entries", "empty index"));
        }
        let (rows, cols) = (av.rows(), av.cols());
        let mut data = Vec::with_capacity(index.len());
        for &(r, c) in index {
            if r >= rows || c >= cols {
                return Err(Error::shape(
                    "gather_entries",
                    format!("({r}, {c}) outside {:?}", av.shape()),
                ));
            }
            data.push(av.data()[r * cols + c]);
        }
        let value = Tensor::from_parts(vec![index.len()], data);
        self.record("gather_entries", value, Op::GatherEntries(a, index.to_vec()), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().sum();
        self.record("sum", Tensor::scalar(total), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let mean = av.data().iter().sum::<f64>() / av.numel() as f64;
        self.record("mean", Tensor::scalar(mean), Op::Mean(a), &[a])
    }

    /// Mean over all entries of the rows where `mask` is set.
    pub fn masked_mean(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let av = self.value(a);
        if mask.len() != av.rows() {
            return Err(Error::shape(
                "masked_mean",
                format!("mask of length {} for {} rows", mask.len(), av.rows()),
            ));
        }
        let rows: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        if rows.is_empty() {
            return Err(Error::Contract("masked_mean over an empty mask".into()));
        }
        let total: f64 = rows.iter().flat_map(|&r| av.row(r)).sum();
        let mean = total / (rows.len() * av.cols()) as f64;
        self.record("masked_mean", Tensor::scalar(mean), Op::MaskedMean(a, rows), &[a])
    }

    /// Row `i` of the result is the mean of rows `j` in the neighborhood of
    /// node `i`; isolated nodes get a zero row.
    pub fn aggregate_mean(&mut self, graph: &Arc<Graph>, h: Var) -> Result<Var> {
        let hv = self.value(h);
        if hv.rows() != graph.num_nodes() || hv.rank() != 2 {
            return Err(Error::shape(
                "aggregate_mean",
                format!("{:?} for a graph with {} nodes", hv.shape(), graph.num_nodes()),
            ));
        }
        let cols = hv.cols();
        let src = hv.data();
        let mut data = vec![0.0; src.len()];
        for i in 0..graph.num_nodes() {
            let adj = graph.adj(i);
            if adj.is_empty() {
                continue;
            }
            let out = &mut data[i * cols..(i + 1) * cols];
            for &j in adj {
                for (o, v) in out.iter_mut().zip(&src[j * cols..(j + 1) * cols]) {
                    *o += v;
                }
            }
            let inv = 1.0 / adj.len() as f64;
            out.iter_mut().for_each(|o| *o *= inv);
        }
        let value = Tensor::from_parts(hv.shape().to_vec(), data);
        self.record("aggregate_mean", value, Op::AggregateMean(h, Arc::clone(graph)), &[h])
    }

    /// Reverse pass from a scalar `loss`, adding `d loss / d leaf` into the
    /// gradient of every leaf that requires it.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(upstream) = adj[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match &mut self.grads[idx] {
                    Some(g) => g.add_assign(&upstream),
                    slot @ None => {
                        *slot = Some(Tensor::from_parts(node.value.shape().to_vec(), upstream))
                    }
                }
                continue;
            }
            self.propagate(idx, &upstream, &mut adj);
        }
        for g in self.grads.iter().flatten() {
            check_finite("backward", g)?;
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, up: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = &nodes[idx].value;
        let wants = |v: Var| nodes[v.0].requires_grad;
        // adds `contrib(slot_buffer)` into the adjoint of `v`
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let buf = adj[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
            f(buf);
        };

        match &nodes[idx].op {
            Op::Leaf => unreachable!(),
            Op::MatMul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if wants(*a) {
                    acc(*a, &mut |g| gemm(m, n, k, up, false, bv.data(), true, g, 1.0));
                }
                if wants(*b) {
                    acc(*b, &mut |g| gemm(k, m, n, av.data(), true, up, false, g, 1.0));
                }
            }
            Op::Add(a, b, kind) | Op::Sub(a, b, kind) => {
                let sign = if matches!(nodes[idx].op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let cols = out.cols();
                acc(*a, &mut |g| {
                    g.iter_mut().zip(up).for_each(|(g, u)| *g += u);
                });
                acc(*b, &mut |g| {
                    for (i, u) in up.iter().enumerate() {
                        g[bcast_index(*kind, i, cols)] += sign * u;
                    }
                });
            }
            Op::Mul(a, b, kind) => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                let cols = out.cols();
                acc(*a, &mut |g| {
                    for (i, u) in up.iter().enumerate() {
                        g[i] += u * bv[bcast_index(*kind, i, cols)];
                    }
                });
                acc(*b, &mut |g| {
                    for (i, u) in up.iter().enumerate() {
                        g[bcast_index(*kind, i, cols)] += u * av[i];
                    }
                });
            }
            Op::Scale(a, s) => acc(*a, &mut |g| {
                g.iter_mut().zip(up).for_each(|(g, u)| *g += s * u);
            }),
            Op::Relu(a) => {
                let x = nodes[a.0].value.data();
                acc(*a, &mut |g| {
                    for i in 0..g.len() {
                        if x[i] > 0.0 {
                            g[i] += up[i];
                        }
                    }
                });
            }
            Op::Exp(a) => {
                let y = out.data();
                acc(*a, &mut |g| {
                    for i in 0..g.len() {
                        g[i] += up[i] * y[i];
                    }
                });
            }
            Op::Log(a) => {
                let x = nodes[a.0].value.data();
                acc(*a, &mut |g| {
                    for i in 0..g.len() {
                        g[i] += up[i] / x[i];
                    }
                });
            }
            Op::ClampMin(a, lo) => {
                let x = nodes[a.0].value.data();
                acc(*a, &mut |g| {
                    for i in 0..g.len() {
                        if x[i] > *lo {
                            g[i] += up[i];
                        }
                    }
                });
            }
            Op::RowSoftmax(a) => {
                let cols = out.cols();
                let y = out.data();
                acc(*a, &mut |g| {
                    for r in 0..y.len() / cols {
                        let s = r * cols..(r + 1) * cols;
                        let dot: f64 = y[s.clone()].iter().zip(&up[s.clone()]).map(|(y, u)| y * u).sum();
                        for i in s {
                            g[i] += y[i] * (up[i] - dot);
                        }
                    }
                });
            }
            Op::RowLogSoftmax(a) => {
                let cols = out.cols();
                let y = out.data();
                acc(*a, &mut |g| {
                    for r in 0..y.len() / cols {
                        let s = r * cols..(r + 1) * cols;
                        let total: f64 = up[s.clone()].iter().sum();
                        for i in s {
                            g[i] += up[i] - y[i].exp() * total;
                        }
                    }
                });
            }
            Op::RowL2Normalize(a, eps) => {
                let cols = out.cols();
                let x = nodes[a.0].value.data();
                let y = out.data();
                acc(*a, &mut |g| {
                    for r in 0..y.len() / cols {
                        let s = r * cols..(r + 1) * cols;
                        let norm = x[s.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm > *eps {
                            let dot: f64 =
                                y[s.clone()].iter().zip(&up[s.clone()]).map(|(y, u)| y * u).sum();
                            for i in s {
                                g[i] += (up[i] - y[i] * dot) / norm;
                            }
                        } else {
                            for i in s {
                                g[i] += up[i] / eps;
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                // out is c x r, input is r x c
                let (c, r) = (out.rows(), out.cols());
                acc(*a, &mut |g| {
                    for i in 0..r {
                        for j in 0..c {
                            g[i * c + j] += up[j * r + i];
                        }
                    }
                });
            }
            Op::GatherRows(a, index) => {
                let cols = out.cols();
                acc(*a, &mut |g| {
                    for (k, &r) in index.iter().enumerate() {
                        for c in 0..cols {
                            g[r * cols + c] += up[k * cols + c];
                        }
                    }
                });
            }
            Op::GatherEntries(a, index) => {
                let cols = nodes[a.0].value.cols();
                acc(*a, &mut |g| {
                    for (k, &(r, c)) in index.iter().enumerate() {
                        g[r * cols + c] += up[k];
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |g| g.iter_mut().for_each(|g| *g += up[0])),
            Op::Mean(a) => {
                let scale = up[0] / nodes[a.0].value.numel() as f64;
                acc(*a, &mut |g| g.iter_mut().for_each(|g| *g += scale));
            }
            Op::MaskedMean(a, rows) => {
                let cols = nodes[a.0].value.cols();
                let scale = up[0] / (rows.len() * cols) as f64;
                acc(*a, &mut |g| {
                    for &r in rows {
                        g[r * cols..(r + 1) * cols].iter_mut().for_each(|g| *g += scale);
                    }
                });
            }
            Op::AggregateMean(h, graph) => {
                let cols = out.cols();
                acc(*h, &mut |g| {
                    for i in 0..graph.num_nodes() {
                        let nbrs = graph.adj(i);
                        if nbrs.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / nbrs.len() as f64;
                        let src = &up[i * cols..(i + 1) * cols];
                        for &j in nbrs {
                            for (gv, u) in g[j * cols..(j + 1) * cols].iter_mut().zip(src) {
                                *gv += inv * u;
                            }
                        }
                    }
                });
            }
        }
    }
}
