use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, Scalar, GEMM_MIN_ROWS};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Index of a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Parameters of one batch-norm layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchNormIds {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics only.
    Infer,
}

#[derive(Debug)]
enum Op<S> {
    Input,
    Param(ParamId),
    Linear { x: NodeId, w: NodeId, b: Option<NodeId> },
    MatMulT { a: NodeId, b: NodeId },
    Add(NodeId, NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Scale(NodeId, S),
    BatchNorm { x: NodeId, gamma: NodeId, beta: NodeId, xhat: Vec<S>, inv_std: Vec<S>, train: bool },
    Attention { q: NodeId, k: NodeId, v: NodeId, heads: usize, q_group: usize, kv_group: usize, scale: S, probs: Vec<S> },
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    GatherRows { x: NodeId, rows: Vec<usize> },
    MeanRows { x: NodeId, group: usize },
    LogSoftmax { x: NodeId, probs: Vec<S> },
    Pick { x: NodeId, index: usize },
    Sum(Vec<NodeId>),
}

#[derive(Debug)]
struct Node<S> {
    op: Op<S>,
    value: Option<Tensor<S>>,
    needs_grad: bool,
}

/// Record of one forward computation, replayed backwards for gradients.
///
/// Parameter values are read from the borrowed store, never copied. Batch-norm layers in
/// train mode queue running-statistic updates; apply them with
/// [`ParamStore::apply_updates`] once the tape is no longer needed.
pub struct Tape<'p, S> {
    store: &'p ParamStore<S>,
    nodes: Vec<Node<S>>,
    stat_updates: Vec<(ParamId, Tensor<S>)>,
    region: DefaultHasher,
}

/// Result of [`Tape::backward`].
pub struct Backward<S> {
    pub params: Gradients<S>,
    nodes: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Backward<S> {
    /// Gradient with respect to an input node created with `requires_grad`.
    pub fn node(&self, id: NodeId) -> Option<&Tensor<S>> {
        self.nodes[id.0].as_ref()
    }
}

/// `dx += gy · w` for `gy: [n, out]`, `w: [out, k]`.
fn transposed_product<S: Scalar>(gy: &[S], w: &Tensor<S>, dx: &mut [S], n: usize) {
    let (out, k) = (w.rows(), w.cols());
    if n < GEMM_MIN_ROWS {
        for (r, dxr) in dx.chunks_mut(k).enumerate() {
            for j in 0..out {
                let g = gy[r * out + j];
                if g != S::zero() {
                    axpy(g, w.row_slice(j), dxr);
                }
            }
        }
    } else {
        S::gemm(n, out, k, S::one(), (gy, out, 1), (w.data(), k, 1), S::one(), dx, k);
    }
}

/// `dw += gyᵀ · x` for `gy: [n, out]`, `x: [n, k]`.
fn outer_product<S: Scalar>(gy: &[S], x: &Tensor<S>, dw: &mut [S], n: usize) {
    let k = x.cols();
    let out = gy.len() / n.max(1);
    if n < GEMM_MIN_ROWS {
        for r in 0..n {
            let xr = x.row_slice(r);
            for (j, dwj) in dw.chunks_mut(k).enumerate() {
                let g = gy[r * out + j];
                if g != S::zero() {
                    axpy(g, xr, dwj);
                }
            }
        }
    } else {
        S::gemm(out, n, k, S::one(), (gy, 1, out), (x.data(), k, 1), S::one(), dw, k);
    }
}

fn shape_err<T>(msg: String) -> Result<T> {
    Err(Error::Shape(msg))
}

impl<'p, S: Scalar> Tape<'p, S> {
    pub fn new(store: &'p ParamStore<S>) -> Self {
        Tape { store, nodes: Vec::new(), stat_updates: Vec::new(), region: DefaultHasher::new() }
    }

    /// Fingerprint of the ReLU activity pattern seen so far. Two forward passes with the
    /// same fingerprint lie in the same linear piece of every ReLU.
    pub fn region(&self) -> u64 {
        self.region.finish()
    }

    pub fn store(&self) -> &'p ParamStore<S> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        let node = &self.nodes[id.0];
        match (&node.op, &node.value) {
            (Op::Param(p), _) => self.store.value(*p),
            (_, Some(v)) => v,
            _ => unreachable!("every non-parameter node stores its value"),
        }
    }

    pub fn take_stat_updates(&mut self) -> Vec<(ParamId, Tensor<S>)> {
        std::mem::take(&mut self.stat_updates)
    }

    fn push(&mut self, op: Op<S>, value: Tensor<S>, inputs: &[NodeId]) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite(format!("{} produced a non-finite value", op_name(&op))));
        }
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node { op, value: Some(value), needs_grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// A constant or, with `requires_grad`, a leaf whose gradient is reported by backward.
    pub fn input(&mut self, value: Tensor<S>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { op: Op::Input, value: Some(value), needs_grad: requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        let needs_grad = self.store.is_trainable(id);
        self.nodes.push(Node { op: Op::Param(id), value: None, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    /// `x · wᵀ + b` with `w: [out, in]`, `b: [1, out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let y = Tensor::affine(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(Op::Linear { x, w, b }, y, &inputs)
    }

    /// Linear layer from parameter handles.
    pub fn dense(&mut self, x: NodeId, w: ParamId, b: Option<ParamId>) -> Result<NodeId> {
        let w = self.param(w);
        let b = b.map(|b| self.param(b));
        self.linear(x, w, b)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = Tensor::matmul_t(self.value(a), self.value(b))?;
        self.push(Op::MatMulT { a, b }, y, &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return shape_err(format!("add: {:?} vs {:?}", va.shape(), vb.shape()));
        }
        let mut y = va.clone();
        y.add_assign(vb);
        self.push(Op::Add(a, b), y, &[a, b])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let mut y = self.value(x).clone();
        for chunk in y.data().chunks(64) {
            let bits = chunk.iter().enumerate().fold(0u64, |acc, (i, &v)| acc | (u64::from(v > S::zero()) << i));
            self.region.write_u64(bits);
        }
        y.data_mut().iter_mut().for_each(|v| *v = v.max(S::zero()));
        self.push(Op::Relu(x), y, &[x])
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        let mut y = self.value(x).clone();
        y.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        self.push(Op::Tanh(x), y, &[x])
    }

    pub fn scale(&mut self, x: NodeId, factor: S) -> Result<NodeId> {
        let mut y = self.value(x).clone();
        y.data_mut().iter_mut().for_each(|v| *v *= factor);
        self.push(Op::Scale(x, factor), y, &[x])
    }

    /// Per-feature normalisation over all rows of `x: [n, d]`.
    pub fn batch_norm(&mut self, x: NodeId, ids: BatchNormIds, mode: NormMode) -> Result<NodeId> {
        let eps = S::of(BN_EPSILON);
        let store = self.store;
        let xv = self.value(x);
        let (n, d) = (xv.rows(), xv.cols());
        let (gamma, beta) = (store.value(ids.gamma).data(), store.value(ids.beta).data());
        if gamma.len() != d || beta.len() != d {
            return shape_err(format!("batch_norm: {d} features but gamma/beta have {}/{}", gamma.len(), beta.len()));
        }
        let train = mode == NormMode::Train;
        let (mean, var) = if train {
            if n < 2 {
                return Err(Error::BatchTooSmall(n));
            }
            let mut mean = vec![S::zero(); d];
            for r in 0..n {
                axpy(S::one(), xv.row_slice(r), &mut mean);
            }
            let inv_n = S::one() / S::of_usize(n);
            mean.iter_mut().for_each(|m| *m *= inv_n);
            let mut var = vec![S::zero(); d];
            for r in 0..n {
                for ((s, &v), &m) in var.iter_mut().zip(xv.row_slice(r)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s *= inv_n);
            (mean, var)
        } else {
            (store.value(ids.running_mean).data().to_vec(), store.value(ids.running_var).data().to_vec())
        };
        let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
        let mut xhat = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n * d);
        for r in 0..n {
            for (c, &v) in xv.row_slice(r).iter().enumerate() {
                let h = (v - mean[c]) * inv_std[c];
                xhat.push(h);
                y.push(gamma[c] * h + beta[c]);
            }
        }
        if train {
            let mom = S::of(BN_MOMENTUM);
            let unbias = S::of_usize(n) / S::of_usize(n - 1);
            let blend = |old: &[S], new: &[S], k: S| -> Tensor<S> {
                Tensor::row(old.iter().zip(new).map(|(&o, &v)| (S::one() - mom) * o + mom * v * k).collect())
            };
            let rm = blend(store.value(ids.running_mean).data(), &mean, S::one());
            let rv = blend(store.value(ids.running_var).data(), &var, unbias);
            self.stat_updates.push((ids.running_mean, rm));
            self.stat_updates.push((ids.running_var, rv));
        }
        let g = self.param(ids.gamma);
        let b = self.param(ids.beta);
        let y = Tensor::matrix(n, d, y)?;
        self.push(Op::BatchNorm { x, gamma: g, beta: b, xhat, inv_std, train }, y, &[x, g, b])
    }

    /// Scaled dot-product attention with `heads` heads.
    ///
    /// Rows are split into independent blocks: block `b` holds queries
    /// `b·q_group..(b+1)·q_group` and keys/values `b·kv_group..(b+1)·kv_group`. Keys flagged
    /// in `mask` (indexed like the rows of `k`) get zero weight.
    #[allow(clippy::too_many_arguments)]
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        q_group: usize,
        kv_group: usize,
        mask: Option<&[bool]>,
    ) -> Result<NodeId> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (dq, dv) = (qv.cols(), vv.cols());
        if heads == 0 || dq % heads != 0 || dv % heads != 0 || kv.cols() != dq {
            return shape_err(format!("attention: q/k/v widths {dq}/{}/{dv} with {heads} heads", kv.cols()));
        }
        if q_group == 0 || kv_group == 0 || qv.rows() % q_group != 0 || kv.rows() != vv.rows() {
            return shape_err("attention: rows do not split into blocks".into());
        }
        let blocks = qv.rows() / q_group;
        if kv.rows() != blocks * kv_group {
            return shape_err(format!("attention: {} key rows for {blocks} blocks of {kv_group}", kv.rows()));
        }
        if let Some(m) = mask {
            if m.len() != kv.rows() {
                return shape_err("attention: mask length differs from key count".into());
            }
        }
        let (hq, hv) = (dq / heads, dv / heads);
        let scale = S::one() / S::of_usize(hq).sqrt();
        let mut probs = vec![S::zero(); blocks * heads * q_group * kv_group];
        let mut out = vec![S::zero(); qv.rows() * dv];
        let mut scores = vec![S::zero(); kv_group];
        for b in 0..blocks {
            for h in 0..heads {
                for i in 0..q_group {
                    let qi = b * q_group + i;
                    let qrow = &qv.row_slice(qi)[h * hq..(h + 1) * hq];
                    let mut max = S::neg_infinity();
                    for (j, s) in scores.iter_mut().enumerate() {
                        let kj = b * kv_group + j;
                        if mask.map_or(false, |m| m[kj]) {
                            *s = S::neg_infinity();
                        } else {
                            *s = scale * dot(qrow, &kv.row_slice(kj)[h * hq..(h + 1) * hq]);
                            max = max.max(*s);
                        }
                    }
                    if max == S::neg_infinity() {
                        return Err(Error::AllMasked);
                    }
                    let p = &mut probs[((b * heads + h) * q_group + i) * kv_group..][..kv_group];
                    let mut total = S::zero();
                    for (pj, &s) in p.iter_mut().zip(&scores) {
                        *pj = if s == S::neg_infinity() { S::zero() } else { (s - max).exp() };
                        total += *pj;
                    }
                    let orow = &mut out[qi * dv + h * hv..qi * dv + (h + 1) * hv];
                    for (j, pj) in p.iter_mut().enumerate() {
                        *pj /= total;
                        if *pj != S::zero() {
                            axpy(*pj, &vv.row_slice(b * kv_group + j)[h * hv..(h + 1) * hv], orow);
                        }
                    }
                }
            }
        }
        let y = Tensor::matrix(qv.rows(), dv, out)?;
        self.push(Op::Attention { q, k, v, heads, q_group, kv_group, scale, probs }, y, &[q, k, v])
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return shape_err("concat_cols: row counts differ".into());
        }
        let width: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut y = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                y.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let y = Tensor::matrix(rows, width, y)?;
        self.push(Op::ConcatCols(parts.to_vec()), y, parts)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let cols = self.value(parts[0]).cols();
        if parts.iter().any(|&p| self.value(p).cols() != cols) {
            return shape_err("concat_rows: column counts differ".into());
        }
        let mut y = Vec::new();
        for &p in parts {
            y.extend_from_slice(self.value(p).data());
        }
        let y = Tensor::matrix(y.len() / cols.max(1), cols, y)?;
        self.push(Op::ConcatRows(parts.to_vec()), y, parts)
    }

    pub fn gather_rows(&mut self, x: NodeId, rows: &[usize]) -> Result<NodeId> {
        let xv = self.value(x);
        if let Some(&r) = rows.iter().find(|&&r| r >= xv.rows()) {
            return shape_err(format!("gather_rows: row {r} of {}", xv.rows()));
        }
        let mut y = Vec::with_capacity(rows.len() * xv.cols());
        for &r in rows {
            y.extend_from_slice(xv.row_slice(r));
        }
        let y = Tensor::matrix(rows.len(), xv.cols(), y)?;
        self.push(Op::GatherRows { x, rows: rows.to_vec() }, y, &[x])
    }

    /// Mean over consecutive groups of `group` rows.
    pub fn mean_rows(&mut self, x: NodeId, group: usize) -> Result<NodeId> {
        let xv = self.value(x);
        if group == 0 || xv.rows() % group != 0 {
            return shape_err(format!("mean_rows: {} rows in groups of {group}", xv.rows()));
        }
        let (g, c) = (xv.rows() / group, xv.cols());
        let mut y = vec![S::zero(); g * c];
        let inv = S::one() / S::of_usize(group);
        for r in 0..xv.rows() {
            axpy(inv, xv.row_slice(r), &mut y[(r / group) * c..(r / group + 1) * c]);
        }
        let y = Tensor::matrix(g, c, y)?;
        self.push(Op::MeanRows { x, group }, y, &[x])
    }

    /// Row-wise `log softmax(x + o·mask)`; `mask` is indexed by column.
    pub fn masked_log_softmax(&mut self, x: NodeId, mask: &[bool], o: S) -> Result<NodeId> {
        let xv = self.value(x);
        let c = xv.cols();
        if mask.len() != c {
            return shape_err(format!("masked_log_softmax: {} mask entries for {c} columns", mask.len()));
        }
        if mask.iter().all(|&m| m) {
            return Err(Error::AllMasked);
        }
        let mut y = Vec::with_capacity(xv.len());
        let mut probs = Vec::with_capacity(xv.len());
        for r in 0..xv.rows() {
            let z: Vec<S> = xv.row_slice(r).iter().zip(mask).map(|(&v, &m)| if m { v + o } else { v }).collect();
            let max = z.iter().copied().fold(S::neg_infinity(), S::max);
            let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<S>().ln();
            for v in z {
                y.push(v - lse);
                probs.push((v - lse).exp());
            }
        }
        let y = Tensor::matrix(xv.rows(), c, y)?;
        self.push(Op::LogSoftmax { x, probs }, y, &[x])
    }

    /// The element at flat position `index` as a `[1, 1]` tensor.
    pub fn pick(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let xv = self.value(x);
        if index >= xv.len() {
            return shape_err(format!("pick: index {index} of {}", xv.len()));
        }
        let y = Tensor::scalar(xv.data()[index]);
        self.push(Op::Pick { x, index }, y, &[x])
    }

    /// Sum of every element of every listed node, as a `[1, 1]` tensor.
    pub fn sum(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let total = parts.iter().map(|&p| self.value(p).data().iter().copied().sum::<S>()).sum::<S>();
        self.push(Op::Sum(parts.to_vec()), Tensor::scalar(total), parts)
    }

    /// Reverse pass from the given seeds (`d loss / d node`).
    pub fn backward(&self, seeds: &[(NodeId, Tensor<S>)]) -> Result<Backward<S>> {
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params = Gradients::new(self.store.len());
        for (id, g) in seeds {
            if g.len() != self.value(*id).len() {
                return shape_err(format!("seed has {} values for a node of {}", g.len(), self.value(*id).len()));
            }
            match &mut grads[id.0] {
                Some(t) => t.add_assign(g),
                slot => *slot = Some(g.clone()),
            }
        }
        let acc = |grads: &mut Vec<Option<Tensor<S>>>, nodes: &Vec<Node<S>>, id: NodeId, shape: &[usize], f: &mut dyn FnMut(&mut [S])| {
            if !nodes[id.0].needs_grad {
                return;
            }
            let slot = grads[id.0].get_or_insert_with(|| Tensor::zeros(shape));
            f(slot.data_mut());
        };
        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else { continue };
            let gyd = gy.data();
            match &node.op {
                Op::Input => grads[idx] = Some(gy),
                Op::Param(p) => {
                    let shape = self.store.value(*p).shape().to_vec();
                    params.accumulate_with(*p, &shape, |t| t.add_assign(&gy));
                    grads[idx] = None;
                }
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (n, out) = (xv.rows(), wv.rows());
                    acc(&mut grads, &self.nodes, *x, xv.shape(), &mut |dx| transposed_product(gyd, wv, dx, n));
                    acc(&mut grads, &self.nodes, *w, wv.shape(), &mut |dw| outer_product(gyd, xv, dw, n));
                    if let Some(b) = b {
                        let bshape = self.value(*b).shape().to_vec();
                        acc(&mut grads, &self.nodes, *b, &bshape, &mut |db| {
                            for r in 0..n {
                                axpy(S::one(), &gyd[r * out..(r + 1) * out], db);
                            }
                        });
                    }
                }
                Op::MatMulT { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let n = av.rows();
                    acc(&mut grads, &self.nodes, *a, av.shape(), &mut |da| transposed_product(gyd, bv, da, n));
                    acc(&mut grads, &self.nodes, *b, bv.shape(), &mut |db| outer_product(gyd, av, db, n));
                }
                Op::Add(a, b) => {
                    for p in [*a, *b] {
                        acc(&mut grads, &self.nodes, p, gy.shape(), &mut |d| axpy(S::one(), gyd, d));
                    }
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    acc(&mut grads, &self.nodes, *x, xv.shape(), &mut |d| {
                        for ((di, &g), &v) in d.iter_mut().zip(gyd).zip(xv.data()) {
                            if v > S::zero() {
                                *di += g;
                            }
                        }
                    });
                }
                Op::Tanh(x) => {
                    let y = node.value.as_ref().expect("tanh value");
                    acc(&mut grads, &self.nodes, *x, y.shape(), &mut |d| {
                        for ((di, &g), &t) in d.iter_mut().zip(gyd).zip(y.data()) {
                            *di += g * (S::one() - t * t);
                        }
                    });
                }
                Op::Scale(x, f) => {
                    acc(&mut grads, &self.nodes, *x, gy.shape(), &mut |d| axpy(*f, gyd, d));
                }
                Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                    let d = inv_std.len();
                    let n = xhat.len() / d;
                    let gam = self.value(*gamma).data();
                    let mut sum_g = vec![S::zero(); d];
                    let mut sum_gx = vec![S::zero(); d];
                    for r in 0..n {
                        for c in 0..d {
                            let g = gyd[r * d + c];
                            sum_g[c] += g;
                            sum_gx[c] += g * xhat[r * d + c];
                        }
                    }
                    acc(&mut grads, &self.nodes, *gamma, &[1, d], &mut |dg| axpy(S::one(), &sum_gx, dg));
                    acc(&mut grads, &self.nodes, *beta, &[1, d], &mut |db| axpy(S::one(), &sum_g, db));
                    let inv_n = S::one() / S::of_usize(n);
                    acc(&mut grads, &self.nodes, *x, gy.shape(), &mut |dx| {
                        for r in 0..n {
                            for c in 0..d {
                                let i = r * d + c;
                                let k = gam[c] * inv_std[c];
                                dx[i] += if *train {
                                    k * (gyd[i] - inv_n * sum_g[c] - xhat[i] * inv_n * sum_gx[c])
                                } else {
                                    k * gyd[i]
                                };
                            }
                        }
                    });
                }
                Op::Attention { q, k, v, heads, q_group, kv_group, scale, probs } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let (heads, qg, kg, scale) = (*heads, *q_group, *kv_group, *scale);
                    let (dq, dv) = (qv.cols(), vv.cols());
                    let (hq, hv) = (dq / heads, dv / heads);
                    let blocks = qv.rows() / qg;
                    let mut dqs = vec![S::zero(); qv.len()];
                    let mut dks = vec![S::zero(); kv.len()];
                    let mut dvs = vec![S::zero(); vv.len()];
                    let mut dp = vec![S::zero(); kg];
                    for b in 0..blocks {
                        for h in 0..heads {
                            for i in 0..qg {
                                let qi = b * qg + i;
                                let p = &probs[((b * heads + h) * qg + i) * kg..][..kg];
                                let go = &gyd[qi * dv + h * hv..qi * dv + (h + 1) * hv];
                                let mut inner = S::zero();
                                for j in 0..kg {
                                    if p[j] == S::zero() {
                                        dp[j] = S::zero();
                                        continue;
                                    }
                                    let kj = b * kg + j;
                                    dp[j] = dot(go, &vv.row_slice(kj)[h * hv..(h + 1) * hv]);
                                    inner += p[j] * dp[j];
                                    axpy(p[j], go, &mut dvs[kj * dv + h * hv..kj * dv + (h + 1) * hv]);
                                }
                                let qrow = &qv.row_slice(qi)[h * hq..(h + 1) * hq];
                                for j in 0..kg {
                                    if p[j] == S::zero() {
                                        continue;
                                    }
                                    let kj = b * kg + j;
                                    let ds = p[j] * (dp[j] - inner) * scale;
                                    axpy(ds, &kv.row_slice(kj)[h * hq..(h + 1) * hq], &mut dqs[qi * dq + h * hq..qi * dq + (h + 1) * hq]);
                                    axpy(ds, qrow, &mut dks[kj * dq + h * hq..kj * dq + (h + 1) * hq]);
                                }
                            }
                        }
                    }
                    acc(&mut grads, &self.nodes, *q, qv.shape(), &mut |d| axpy(S::one(), &dqs, d));
                    acc(&mut grads, &self.nodes, *k, kv.shape(), &mut |d| axpy(S::one(), &dks, d));
                    acc(&mut grads, &self.nodes, *v, vv.shape(), &mut |d| axpy(S::one(), &dvs, d));
                }
                Op::ConcatCols(parts) => {
                    let rows = gy.rows();
                    let width = gy.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let c = pv.cols();
                        acc(&mut grads, &self.nodes, p, pv.shape(), &mut |d| {
                            for r in 0..rows {
                                axpy(S::one(), &gyd[r * width + offset..r * width + offset + c], &mut d[r * c..(r + 1) * c]);
                            }
                        });
                        offset += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let n = pv.len();
                        acc(&mut grads, &self.nodes, p, pv.shape(), &mut |d| axpy(S::one(), &gyd[offset..offset + n], d));
                        offset += n;
                    }
                }
                Op::GatherRows { x, rows } => {
                    let xv = self.value(*x);
                    let c = xv.cols();
                    acc(&mut grads, &self.nodes, *x, xv.shape(), &mut |d| {
                        for (i, &r) in rows.iter().enumerate() {
                            axpy(S::one(), &gyd[i * c..(i + 1) * c], &mut d[r * c..(r + 1) * c]);
                        }
                    });
                }
                Op::MeanRows { x, group } => {
                    let xv = self.value(*x);
                    let c = xv.cols();
                    let inv = S::one() / S::of_usize(*group);
                    acc(&mut grads, &self.nodes, *x, xv.shape(), &mut |d| {
                        for r in 0..xv.rows() {
                            axpy(inv, &gyd[(r / group) * c..(r / group + 1) * c], &mut d[r * c..(r + 1) * c]);
                        }
                    });
                }
                Op::LogSoftmax { x, probs } => {
                    let c = gy.cols();
                    acc(&mut grads, &self.nodes, *x, gy.shape(), &mut |d| {
                        for r in 0..gy.rows() {
                            let g = &gyd[r * c..(r + 1) * c];
                            let total: S = g.iter().copied().sum();
                            for j in 0..c {
                                d[r * c + j] += g[j] - probs[r * c + j] * total;
                            }
                        }
                    });
                }
                Op::Pick { x, index } => {
                    let shape = self.value(*x).shape().to_vec();
                    acc(&mut grads, &self.nodes, *x, &shape, &mut |d| d[*index] += gyd[0]);
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        let shape = self.value(p).shape().to_vec();
                        acc(&mut grads, &self.nodes, p, &shape, &mut |d| d.iter_mut().for_each(|v| *v += gyd[0]));
                    }
                }
            }
        }
        Ok(Backward { params, nodes: grads })
    }
}

fn op_name<S>(op: &Op<S>) -> &'static str {
    match op {
        Op::Input => "input",
        Op::Param(_) => "param",
        Op::Linear { .. } => "linear",
        Op::MatMulT { .. } => "matmul",
        Op::Add(..) => "add",
        Op::Relu(_) => "relu",
        Op::Tanh(_) => "tanh",
        Op::Scale(..) => "scale",
        Op::BatchNorm { .. } => "batch_norm",
        Op::Attention { .. } => "attention",
        Op::ConcatCols(_) => "concat",
        Op::ConcatRows(_) => "concat_rows",
        Op::GatherRows { .. } => "gather",
        Op::MeanRows { .. } => "mean",
        Op::LogSoftmax { .. } => "log_softmax",
        Op::Pick { .. } => "pick",
        Op::Sum(_) => "sum",
    }
}
