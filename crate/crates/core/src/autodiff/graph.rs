use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::bail;
use crate::math;
use crate::Result;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

/// Batch statistics produced by a training-mode batch-norm, to be folded into
/// the running estimates of the bound parameters.
#[derive(Debug, Clone)]
pub struct StatUpdate {
    pub mean_param: ParamId,
    pub var_param: ParamId,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(super) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Matmul(Var, Var),
    SumAll(Var),
    MeanAll(Var),
    MeanAxis(Var, usize),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize),
    Conv(super::layers_ops::ConvSaved),
    BatchNorm(super::layers_ops::BnSaved),
    MaxPool(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
pub(super) struct Node {
    pub(super) shape: Vec<usize>,
    pub(super) value: Vec<f64>,
    pub(super) op: Op,
    pub(super) requires_grad: bool,
    /// Accumulated gradient; only kept for leaves.
    pub(super) grad: Option<Vec<f64>>,
}

/// Recording of one forward computation.
///
/// Graphs are single-threaded and are meant to be dropped after the backward
/// pass; build a fresh one per step.
#[derive(Debug, Default)]
pub struct Graph {
    pub(super) nodes: Vec<Node>,
    bindings: BTreeMap<ParamId, Var>,
    stat_updates: Vec<StatUpdate>,
}

/// Row-major strides of `shape`.
pub(super) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` viewed inside the broadcast `out` shape (0 on expanded axes).
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = strides(shape);
    let off = out.len() - shape.len();
    (0..out.len()).map(|i| if i < off || shape[i - off] == 1 { 0 } else { own[i - off] }).collect()
}

/// Calls `f(out_index, a_index, b_index)` for every element of the broadcast output.
fn for_each_broadcast(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let n: usize = out.iter().product();
    if n == 0 {
        return;
    }
    let rank = out.len();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    let last = rank - 1;
    let (la, lb, len) = (sa[last], sb[last], out[last]);
    let mut o = 0;
    loop {
        let (mut pa, mut pb) = (ia, ib);
        for _ in 0..len {
            f(o, pa, pb);
            o += 1;
            pa += la;
            pb += lb;
        }
        // advance the outer multi-index
        let mut d = last;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + math::exp(-x))
    } else {
        let e = math::exp(x);
        e / (1.0 + e)
    }
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(super) fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(super::numel(&shape), value.len());
        self.nodes.push(Node { shape, value, op, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    pub(super) fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Inserts a tensor as a leaf; its `requires_grad` flag is honored.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Constant (non-differentiable) leaf.
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        if super::numel(shape) != data.len() {
            bail!(Dimension, "constant of shape {:?} given {} values", shape, data.len());
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf, false))
    }

    /// Binds a stored parameter into this graph (once per graph).
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.bindings.get(&id) {
            return *v;
        }
        let v = self.leaf(store.get(id));
        self.bindings.insert(id, v);
        v
    }

    pub fn bindings(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.bindings.iter().map(|(p, v)| (*p, *v))
    }

    pub(crate) fn record_stat_update(&mut self, u: StatUpdate) {
        self.stat_updates.push(u);
    }

    pub fn stat_updates(&self) -> &[StatUpdate] {
        &self.stat_updates
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Copies a node out as a standalone tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.clone()).expect("node shape is consistent")
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn binary(&mut self, a: Var, b: Var, kind: u8) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out = match broadcast_shape(&sa, &sb) {
            Some(s) => s,
            None => bail!(Dimension, "cannot broadcast {:?} with {:?}", sa, sb),
        };
        let n = super::numel(&out);
        let mut value = vec![0.0; n];
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if sa == sb {
            for i in 0..n {
                value[i] = match kind {
                    0 => va[i] + vb[i],
                    1 => va[i] - vb[i],
                    _ => va[i] * vb[i],
                };
            }
        } else {
            let (ta, tb) = (broadcast_strides(&sa, &out), broadcast_strides(&sb, &out));
            for_each_broadcast(&out, &ta, &tb, |o, i, j| {
                value[o] = match kind {
                    0 => va[i] + vb[j],
                    1 => va[i] - vb[j],
                    _ => va[i] * vb[j],
                };
            });
        }
        let op = match kind {
            0 => Op::Add(a, b),
            1 => Op::Sub(a, b),
            _ => Op::Mul(a, b),
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, value, op, rg))
    }

    /// Broadcasting addition.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, 0)
    }

    /// Broadcasting subtraction.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, 1)
    }

    /// Broadcasting elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, 2)
    }

    /// `alpha * x + beta`.
    pub fn affine(&mut self, x: Var, alpha: f64, beta: f64) -> Var {
        let value = self.value(x).iter().map(|v| alpha * v + beta).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, value, Op::Affine(x, alpha), rg)
    }

    pub fn scale(&mut self, x: Var, alpha: f64) -> Var {
        self.affine(x, alpha, 0.0)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, value, op, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, math::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(x))
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            bail!(Dimension, "matmul of {:?} by {:?}", sa, sb);
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut value = vec![0.0; m * n];
        matmul_into(&self.nodes[a.0].value, &self.nodes[b.0].value, &mut value, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], value, Op::Matmul(a, b), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.rg(x);
        self.push(Vec::new(), vec![s], Op::SumAll(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().sum::<f64>() / v.len().max(1) as f64;
        let rg = self.rg(x);
        self.push(Vec::new(), vec![s], Op::MeanAll(x), rg)
    }

    /// Mean over one axis, keeping it with size 1.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            bail!(Dimension, "axis {} out of range for {:?}", axis, shape);
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let v = self.value(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &v[(o * len + l) * inner..(o * len + l + 1) * inner];
                let dst = &mut out[o * inner..(o + 1) * inner];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
            }
        }
        let inv = 1.0 / len as f64;
        out.iter_mut().for_each(|d| *d *= inv);
        let mut oshape = shape;
        oshape[axis] = 1;
        let rg = self.rg(x);
        Ok(self.push(oshape, out, Op::MeanAxis(x, axis), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if super::numel(shape) != self.value(x).len() {
            bail!(Dimension, "cannot reshape {:?} into {:?}", self.shape(x), shape);
        }
        let value = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape.to_vec(), value, Op::Reshape(x), rg))
    }

    /// Axis permutation: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || core::mem::replace(&mut seen[a], true)) {
            bail!(Dimension, "invalid permutation {:?} for {:?}", axes, shape);
        }
        let oshape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let istr = strides(&shape);
        let mapped: Vec<usize> = axes.iter().map(|&a| istr[a]).collect();
        let zero = vec![0; oshape.len()];
        let v = self.value(x);
        let mut out = vec![0.0; v.len()];
        for_each_broadcast(&oshape, &mapped, &zero, |o, i, _| out[o] = v[i]);
        let rg = self.rg(x);
        Ok(self.push(oshape, out, Op::Permute(x, axes.to_vec()), rg))
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        if xs.is_empty() {
            bail!(Dimension, "concat of zero tensors");
        }
        let first = self.shape(xs[0]).to_vec();
        if axis >= first.len() {
            bail!(Dimension, "concat axis {} out of range for {:?}", axis, first);
        }
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            if s.len() != first.len() || (0..s.len()).any(|i| i != axis && s[i] != first[i]) {
                bail!(Dimension, "concat of {:?} with {:?} along axis {}", first, s, axis);
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                let len = self.shape(x)[axis] * inner;
                out.extend_from_slice(&self.value(x)[o * len..(o + 1) * len]);
            }
        }
        let mut oshape = first;
        oshape[axis] = total;
        let rg = xs.iter().any(|&x| self.rg(x));
        Ok(self.push(oshape, out, Op::Concat(xs.to_vec(), axis), rg))
    }

    /// Contiguous range `[start, start+len)` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            bail!(Dimension, "slice {}..{} on axis {} of {:?}", start, start + len, axis, shape);
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let v = self.value(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            out.extend_from_slice(&v[base..base + len * inner]);
        }
        let mut oshape = shape;
        oshape[axis] = len;
        let rg = self.rg(x);
        Ok(self.push(oshape, out, Op::Slice(x, axis, start), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Intermediate gradients are recomputed on every call; leaf gradients are
    /// accumulated, so calling this twice without [`Graph::zero_grad`] doubles them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            bail!(Contract, "backward needs a scalar loss, got shape {:?}", self.shape(loss));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                add_into(&mut self.nodes[i].grad, &g);
                continue;
            }
            let op = core::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.propagate(i, &op, &g, &mut grads);
            self.nodes[i].op = op;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.grad = None);
    }

    fn propagate(&self, i: usize, op: &Op, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let mut send = |v: Var, contrib: Vec<f64>| {
            if self.nodes[v.0].requires_grad {
                add_into(&mut grads[v.0], &contrib);
            }
        };
        match op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let mut ga = vec![0.0; va.len()];
                let mut gb = vec![0.0; vb.len()];
                let (ta, tb) = (broadcast_strides(sa, &node.shape), broadcast_strides(sb, &node.shape));
                for_each_broadcast(&node.shape, &ta, &tb, |o, ia, ib| match op {
                    Op::Add(..) => {
                        ga[ia] += g[o];
                        gb[ib] += g[o];
                    }
                    Op::Sub(..) => {
                        ga[ia] += g[o];
                        gb[ib] -= g[o];
                    }
                    _ => {
                        ga[ia] += g[o] * vb[ib];
                        gb[ib] += g[o] * va[ia];
                    }
                });
                send(*a, ga);
                send(*b, gb);
            }
            Op::Affine(x, alpha) => send(*x, g.iter().map(|v| v * alpha).collect()),
            Op::Tanh(x) => send(*x, g.iter().zip(&node.value).map(|(g, y)| g * (1.0 - y * y)).collect()),
            Op::Sigmoid(x) => send(*x, g.iter().zip(&node.value).map(|(g, y)| g * y * (1.0 - y)).collect()),
            Op::Relu(x) => {
                let xv = &self.nodes[x.0].value;
                send(*x, g.iter().zip(xv).map(|(g, v)| if *v > 0.0 { *g } else { 0.0 }).collect())
            }
            Op::Matmul(a, b) => {
                let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let n = self.nodes[b.0].shape[1];
                if self.nodes[a.0].requires_grad {
                    // dA = dC · Bᵀ
                    let bv = &self.nodes[b.0].value;
                    let mut ga = vec![0.0; m * k];
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for c in 0..k {
                            let brow = &bv[c * n..(c + 1) * n];
                            ga[r * k + c] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    send(*a, ga);
                }
                if self.nodes[b.0].requires_grad {
                    // dB = Aᵀ · dC
                    let av = &self.nodes[a.0].value;
                    let mut gb = vec![0.0; k * n];
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for c in 0..k {
                            let s = av[r * k + c];
                            if s != 0.0 {
                                gb[c * n..(c + 1) * n].iter_mut().zip(grow).for_each(|(d, x)| *d += s * x);
                            }
                        }
                    }
                    send(*b, gb);
                }
            }
            Op::SumAll(x) => send(*x, vec![g[0]; self.nodes[x.0].value.len()]),
            Op::MeanAll(x) => {
                let n = self.nodes[x.0].value.len();
                send(*x, vec![g[0] / n as f64; n])
            }
            Op::MeanAxis(x, axis) => {
                let shape = &self.nodes[x.0].shape;
                let outer: usize = shape[..*axis].iter().product();
                let len = shape[*axis];
                let inner: usize = shape[axis + 1..].iter().product();
                let inv = 1.0 / len as f64;
                let mut gx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for l in 0..len {
                        for j in 0..inner {
                            gx[(o * len + l) * inner + j] = g[o * inner + j] * inv;
                        }
                    }
                }
                send(*x, gx)
            }
            Op::Reshape(x) => send(*x, g.to_vec()),
            Op::Permute(x, axes) => {
                let ishape = &self.nodes[x.0].shape;
                let istr = strides(ishape);
                let mapped: Vec<usize> = axes.iter().map(|&a| istr[a]).collect();
                let zero = vec![0; axes.len()];
                let mut gx = vec![0.0; g.len()];
                for_each_broadcast(&node.shape, &mapped, &zero, |o, ii, _| gx[ii] = g[o]);
                send(*x, gx)
            }
            Op::Concat(xs, axis) => {
                let outer: usize = node.shape[..*axis].iter().product();
                let inner: usize = node.shape[axis + 1..].iter().product();
                let total = node.shape[*axis] * inner;
                let mut offset = 0;
                for &x in xs {
                    let len = self.nodes[x.0].shape[*axis] * inner;
                    if self.nodes[x.0].requires_grad {
                        let mut gx = Vec::with_capacity(outer * len);
                        for o in 0..outer {
                            gx.extend_from_slice(&g[o * total + offset..o * total + offset + len]);
                        }
                        send(x, gx);
                    }
                    offset += len;
                }
            }
            Op::Slice(x, axis, start) => {
                let ishape = &self.nodes[x.0].shape;
                let outer: usize = ishape[..*axis].iter().product();
                let inner: usize = ishape[axis + 1..].iter().product();
                let len = node.shape[*axis];
                let mut gx = vec![0.0; self.nodes[x.0].value.len()];
                for o in 0..outer {
                    let base = (o * ishape[*axis] + start) * inner;
                    gx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                send(*x, gx)
            }
            Op::Conv(saved) => {
                for (v, gv) in saved.backward(self, g) {
                    send(v, gv);
                }
            }
            Op::BatchNorm(saved) => {
                for (v, gv) in saved.backward(self, g) {
                    send(v, gv);
                }
            }
            Op::MaxPool(x, argmax) => {
                let mut gx = vec![0.0; self.nodes[x.0].value.len()];
                for (o, &src) in argmax.iter().enumerate() {
                    gx[src] += g[o];
                }
                send(*x, gx)
            }
        }
    }
}

/// `c += a(m×k) · b(k×n)`, row-major.
pub(super) fn matmul_into(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for r in 0..m {
        let crow = &mut c[r * n..(r + 1) * n];
        for p in 0..k {
            let s = a[r * k + p];
            if s == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            crow.iter_mut().zip(brow).for_each(|(d, x)| *d += s * x);
        }
    }
}
