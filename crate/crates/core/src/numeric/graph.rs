use alloc::vec;
use alloc::vec::Vec;

use super::array::Array;
use super::kernels::{gemm, Layout};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Block structure for [`Graph::attention`]: the `[batch·seq_len × d]`
/// operands hold `batch` independent sentences, each attended over in
/// `heads` column slices of width `d / heads`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayout {
    pub batch: usize,
    pub seq_len: usize,
    pub heads: usize,
    /// `true` for real tokens, `false` for padding; length `batch·seq_len`.
    pub key_mask: Vec<bool>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: NodeId,
        b: NodeId,
        trans_b: bool,
    },
    AddRow {
        a: NodeId,
        bias: NodeId,
    },
    Linear {
        x: NodeId,
        w: NodeId,
        bias: NodeId,
    },
    Lerp {
        gate: NodeId,
        a: NodeId,
        b: NodeId,
    },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    OneMinus(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Concat(NodeId, NodeId),
    Embedding {
        table: NodeId,
        ids: Vec<usize>,
    },
    SoftmaxRows(NodeId),
    LayerNorm {
        a: NodeId,
        gain: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        bias: NodeId,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        layout: AttentionLayout,
        probs: Vec<f64>,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<f64>,
        count: usize,
    },
    Sum(NodeId),
}

#[derive(Debug)]
struct Node {
    value: Array,
    grad: Option<Array>,
    op: Op,
    needs_grad: bool,
}

/// Append-only computation tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    kink_hash: u64,
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

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Array) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Array) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Array {
        &self.nodes[id.0].value
    }

    /// Gradient of a leaf written by the last [`Graph::backward`]; `None`
    /// when the node was unreachable from the root, does not need a
    /// gradient, or is an intermediate result.
    pub fn grad(&self, id: NodeId) -> Option<&Array> {
        self.nodes[id.0].grad.as_ref()
    }

    /// Moves the gradient out, substituting zeros when there is none.
    pub fn take_grad(&mut self, id: NodeId) -> Array {
        let node = &mut self.nodes[id.0];
        node.grad
            .take()
            .unwrap_or_else(|| Array::zeros(node.value.shape()))
    }

    /// Hash of the sign pattern of every ReLU input recorded so far. Two
    /// evaluations with different signatures straddle a ReLU kink.
    pub fn kink_signature(&self) -> u64 {
        self.kink_hash
    }

    fn push(&mut self, value: Array, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    fn matrix(&self, id: NodeId, op: &'static str) -> Result<(usize, usize)> {
        let v = &self.nodes[id.0].value;
        v.dims2().ok_or_else(|| Error::shape(op, v.shape(), &[]))
    }

    /// `a·b` for `a: [m×k]`, `b: [k×n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_impl(a, b, false)
    }

    /// `a·bᵀ` for `a: [m×k]`, `b: [n×k]`.
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: NodeId, b: NodeId, trans_b: bool) -> Result<NodeId> {
        let (m, k) = self.matrix(a, "matmul")?;
        let (br, bc) = self.matrix(b, "matmul")?;
        let (bk, n, lb) = if trans_b {
            (bc, br, Layout::transposed(bc))
        } else {
            (br, bc, Layout::row_major(bc))
        };
        if k != bk {
            return Err(Error::shape(
                "matmul",
                self.value(a).shape(),
                self.value(b).shape(),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            1.0,
            self.value(a).data(),
            Layout::row_major(k),
            self.value(b).data(),
            lb,
            0.0,
            &mut out,
            Layout::row_major(n),
        );
        let needs = self.needs(&[a, b]);
        Ok(self.push(
            Array::from_parts(vec![m, n], out),
            Op::MatMul { a, b, trans_b },
            needs,
        ))
    }

    /// Adds `bias: [n]` to every row of `a: [m×n]`.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = self.matrix(a, "add_row")?;
        let bv = self.value(bias);
        if bv.shape() != [n] {
            return Err(Error::shape("add_row", self.value(a).shape(), bv.shape()));
        }
        let mut out = self.value(a).data().to_vec();
        let b = bv.data();
        for row in out.chunks_exact_mut(n) {
            for (x, y) in row.iter_mut().zip(b) {
                *x += *y;
            }
        }
        let needs = self.needs(&[a, bias]);
        Ok(self.push(
            Array::from_parts(vec![m, n], out),
            Op::AddRow { a, bias },
            needs,
        ))
    }

    /// `x·w + bias` for `x: [m×k]`, `w: [k×n]`, `bias: [n]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, k) = self.matrix(x, "linear")?;
        let (wk, n) = self.matrix(w, "linear")?;
        if k != wk {
            return Err(Error::shape("linear", self.value(x).shape(), self.value(w).shape()));
        }
        let bv = self.value(bias);
        if bv.shape() != [n] {
            return Err(Error::shape("linear", self.value(w).shape(), bv.shape()));
        }
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(bv.data());
        }
        gemm(
            m,
            k,
            n,
            1.0,
            self.value(x).data(),
            Layout::row_major(k),
            self.value(w).data(),
            Layout::row_major(n),
            1.0,
            &mut out,
            Layout::row_major(n),
        );
        let needs = self.needs(&[x, w, bias]);
        Ok(self.push(Array::from_parts(vec![m, n], out), Op::Linear { x, w, bias }, needs))
    }

    /// `gate ⊙ a + (1 − gate) ⊙ b`, elementwise.
    pub fn lerp(&mut self, gate: NodeId, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(gate, a, "lerp")?;
        self.same_shape(a, b, "lerp")?;
        let (gv, av, bv) = (self.value(gate), self.value(a), self.value(b));
        let data = gv
            .data()
            .iter()
            .zip(av.data().iter().zip(bv.data()))
            .map(|(&g, (&x, &y))| g * x + (1.0 - g) * y)
            .collect();
        let out = Array::from_parts(av.shape().to_vec(), data);
        let needs = self.needs(&[gate, a, b]);
        Ok(self.push(out, Op::Lerp { gate, a, b }, needs))
    }

    fn same_shape(&self, a: NodeId, b: NodeId, op: &'static str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(())
    }

    fn map(&self, a: NodeId, f: impl Fn(f64) -> f64) -> Array {
        let v = self.value(a);
        Array::from_parts(v.shape().to_vec(), v.data().iter().map(|&x| f(x)).collect())
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Array {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Array::from_parts(va.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let out = self.zip(a, b, |x, y| x + y);
        let needs = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), needs))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let out = self.zip(a, b, |x, y| x * y);
        let needs = self.needs(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let out = self.map(a, |x| x * s);
        let needs = self.needs(&[a]);
        self.push(out, Op::Scale(a, s), needs)
    }

    /// `1 − a`, elementwise.
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let out = self.map(a, |x| 1.0 - x);
        let needs = self.needs(&[a]);
        self.push(out, Op::OneMinus(a), needs)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let mut h = self.kink_hash;
        for &x in self.value(a).data() {
            h = (h ^ u64::from(x > 0.0)).wrapping_mul(0x0100_0000_01B3).rotate_left(5);
        }
        self.kink_hash = h;
        let out = self.map(a, |x| if x > 0.0 { x } else { 0.0 });
        let needs = self.needs(&[a]);
        self.push(out, Op::Relu(a), needs)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.map(a, sigmoid);
        let needs = self.needs(&[a]);
        self.push(out, Op::Sigmoid(a), needs)
    }

    /// Columns of `a` followed by columns of `b`.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, p) = self.matrix(a, "concat")?;
        let (mb, q) = self.matrix(b, "concat")?;
        if m != mb {
            return Err(Error::shape("concat", self.value(a).shape(), self.value(b).shape()));
        }
        let mut out = Vec::with_capacity(m * (p + q));
        for r in 0..m {
            out.extend_from_slice(&self.value(a).data()[r * p..(r + 1) * p]);
            out.extend_from_slice(&self.value(b).data()[r * q..(r + 1) * q]);
        }
        let needs = self.needs(&[a, b]);
        Ok(self.push(
            Array::from_parts(vec![m, p + q], out),
            Op::Concat(a, b),
            needs,
        ))
    }

    /// Gathers rows of `table: [V×d]`.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let (vocab, d) = self.matrix(table, "embedding")?;
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(Error::Vocab { id, size: vocab });
            }
            out.extend_from_slice(self.value(table).row(id));
        }
        let needs = self.needs(&[table]);
        Ok(self.push(
            Array::from_parts(vec![ids.len(), d], out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            needs,
        ))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (m, n) = self.matrix(a, "softmax_rows")?;
        let mut out = self.value(a).data().to_vec();
        if n > 0 {
            for row in out.chunks_exact_mut(n) {
                softmax_in_place(row);
            }
        }
        let needs = self.needs(&[a]);
        Ok(self.push(Array::from_parts(vec![m, n], out), Op::SoftmaxRows(a), needs))
    }

    /// Row-wise `gain ⊙ (x − μ)/√(σ² + eps) + bias`, with the biased variance.
    pub fn layer_norm(&mut self, a: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> Result<NodeId> {
        let (m, n) = self.matrix(a, "layer_norm")?;
        if n < 2 {
            return Err(Error::DegenerateNorm(n));
        }
        for p in [gain, bias] {
            if self.value(p).shape() != [n] {
                return Err(Error::shape("layer_norm", self.value(a).shape(), self.value(p).shape()));
            }
        }
        let x = self.value(a).data();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &x[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / libm::sqrt(var + eps);
            inv_std[r] = is;
            for c in 0..n {
                let h = (row[c] - mean) * is;
                xhat[r * n + c] = h;
                out[r * n + c] = h * g[c] + b[c];
            }
        }
        let needs = self.needs(&[a, gain, bias]);
        Ok(self.push(
            Array::from_parts(vec![m, n], out),
            Op::LayerNorm {
                a,
                gain,
                xhat,
                inv_std,
                bias,
            },
            needs,
        ))
    }

    /// Block-diagonal scaled dot-product attention,
    /// `softmax(Q·Kᵀ/√d_k)·V` per sentence and head, with padded keys
    /// excluded from the softmax.
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, layout: &AttentionLayout) -> Result<NodeId> {
        let (rows, d) = self.matrix(q, "attention")?;
        for other in [k, v] {
            if self.value(other).shape() != [rows, d] {
                return Err(Error::shape("attention", self.value(q).shape(), self.value(other).shape()));
            }
        }
        let AttentionLayout {
            batch,
            seq_len: n,
            heads,
            ..
        } = *layout;
        if batch * n != rows || layout.key_mask.len() != rows {
            return Err(Error::shape("attention", &[rows, d], &[batch, n]));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::config("attention width must be divisible by the head count"));
        }
        let dk = d / heads;
        let scale = 1.0 / libm::sqrt(dk as f64);
        let mut probs = vec![0.0; batch * heads * n * n];
        let mut out = vec![0.0; rows * d];
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let rm = Layout::row_major(d);
        let kt = Layout { rs: 1, cs: d };
        for b in 0..batch {
            let mask = &layout.key_mask[b * n..(b + 1) * n];
            for h in 0..heads {
                let off = b * n * d + h * dk;
                let p = &mut probs[(b * heads + h) * n * n..(b * heads + h + 1) * n * n];
                gemm(n, dk, n, scale, &qd[off..], rm, &kd[off..], kt, 0.0, p, Layout::row_major(n));
                for row in p.chunks_exact_mut(n) {
                    masked_softmax_in_place(row, mask);
                }
                gemm(n, n, dk, 1.0, p, Layout::row_major(n), &vd[off..], rm, 0.0, &mut out[off..], rm);
            }
        }
        let needs = self.needs(&[q, k, v]);
        Ok(self.push(
            Array::from_parts(vec![rows, d], out),
            Op::Attention {
                q,
                k,
                v,
                layout: layout.clone(),
                probs,
            },
            needs,
        ))
    }

    /// Mean over unmasked rows of `−log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize], mask: &[bool]) -> Result<NodeId> {
        let (m, c) = self.matrix(logits, "cross_entropy")?;
        if targets.len() != m || mask.len() != m {
            return Err(Error::shape("cross_entropy", &[m, c], &[targets.len(), mask.len()]));
        }
        let count = mask.iter().filter(|&&x| x).count();
        if count == 0 {
            return Err(Error::EmptyLoss);
        }
        let x = self.value(logits).data();
        let mut probs = vec![0.0; m * c];
        let mut total = 0.0;
        for r in 0..m {
            if !mask[r] {
                continue;
            }
            let t = targets[r];
            if t >= c {
                return Err(Error::Target { target: t, classes: c });
            }
            let row = &x[r * c..(r + 1) * c];
            let p = &mut probs[r * c..(r + 1) * c];
            p.copy_from_slice(row);
            let lse = log_sum_exp(row);
            softmax_in_place(p);
            total += lse - row[t];
        }
        let loss = total / count as f64;
        let needs = self.needs(&[logits]);
        Ok(self.push(
            Array::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                count,
            },
            needs,
        ))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).sum();
        let needs = self.needs(&[a]);
        self.push(Array::scalar(s), Op::Sum(a), needs)
    }

    /// Reverse sweep from a scalar `root`. Gradients from earlier sweeps are
    /// discarded; within one sweep contributions to a node used several
    /// times are summed.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        let rv = self.value(root);
        if !rv.is_scalar() {
            return Err(Error::NonScalarRoot(rv.shape().to_vec()));
        }
        let shape = rv.shape().to_vec();
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[root.0].grad = Some(Array::full(&shape, 1.0));
        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.local_grads(i, g.data());
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.nodes[i].grad = Some(g);
            }
            for (id, delta) in contributions {
                self.accumulate(id, delta);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, delta: Vec<f64>) {
        let node = &mut self.nodes[id.0];
        match &mut node.grad {
            Some(g) => g.add_assign(&delta),
            None => node.grad = Some(Array::from_parts(node.value.shape().to_vec(), delta)),
        }
    }

    fn local_grads(&self, i: usize, g: &[f64]) -> Vec<(NodeId, Vec<f64>)> {
        let node = &self.nodes[i];
        let wants = |id: NodeId| self.nodes[id.0].needs_grad;
        let val = |id: NodeId| self.nodes[id.0].value.data();
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (m, k) = self.nodes[a.0].value.dims2().unwrap();
                let n = node.value.shape()[1];
                if wants(*a) {
                    // dA = dC·Bᵀ
                    let mut da = vec![0.0; m * k];
                    let lb = if *trans_b {
                        Layout::row_major(k)
                    } else {
                        Layout::transposed(n)
                    };
                    gemm(m, n, k, 1.0, g, Layout::row_major(n), val(*b), lb, 0.0, &mut da, Layout::row_major(k));
                    out.push((*a, da));
                }
                if wants(*b) {
                    let mut db = vec![0.0; k * n];
                    if *trans_b {
                        // B is stored [n×k]: dB = dCᵀ·A
                        gemm(n, m, k, 1.0, g, Layout::transposed(n), val(*a), Layout::row_major(k), 0.0, &mut db, Layout::row_major(k));
                    } else {
                        // dB = Aᵀ·dC
                        gemm(k, m, n, 1.0, val(*a), Layout::transposed(k), g, Layout::row_major(n), 0.0, &mut db, Layout::row_major(n));
                    }
                    out.push((*b, db));
                }
            }
            Op::Linear { x, w, bias } => {
                let (m, k) = self.nodes[x.0].value.dims2().unwrap();
                let n = node.value.shape()[1];
                if wants(*x) {
                    // dX = dY·Wᵀ
                    let mut dx = vec![0.0; m * k];
                    gemm(m, n, k, 1.0, g, Layout::row_major(n), val(*w), Layout::transposed(n), 0.0, &mut dx, Layout::row_major(k));
                    out.push((*x, dx));
                }
                if wants(*w) {
                    // dW = Xᵀ·dY
                    let mut dw = vec![0.0; k * n];
                    gemm(k, m, n, 1.0, val(*x), Layout::transposed(k), g, Layout::row_major(n), 0.0, &mut dw, Layout::row_major(n));
                    out.push((*w, dw));
                }
                if wants(*bias) {
                    let mut db = vec![0.0; n];
                    for row in g.chunks_exact(n) {
                        for (s, x) in db.iter_mut().zip(row) {
                            *s += *x;
                        }
                    }
                    out.push((*bias, db));
                }
            }
            Op::Lerp { gate, a, b } => {
                let (gv, av, bv) = (val(*gate), val(*a), val(*b));
                if wants(*gate) {
                    out.push((*gate, (0..g.len()).map(|j| g[j] * (av[j] - bv[j])).collect()));
                }
                if wants(*a) {
                    out.push((*a, g.iter().zip(gv).map(|(d, s)| d * s).collect()));
                }
                if wants(*b) {
                    out.push((*b, g.iter().zip(gv).map(|(d, s)| d * (1.0 - s)).collect()));
                }
            }
            Op::AddRow { a, bias } => {
                let n = node.value.shape()[1];
                if wants(*a) {
                    out.push((*a, g.to_vec()));
                }
                if wants(*bias) {
                    let mut db = vec![0.0; n];
                    for row in g.chunks_exact(n) {
                        for (s, x) in db.iter_mut().zip(row) {
                            *s += *x;
                        }
                    }
                    out.push((*bias, db));
                }
            }
            Op::Add(a, b) => {
                for id in [a, b] {
                    if wants(*id) {
                        out.push((*id, g.to_vec()));
                    }
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    out.push((*a, g.iter().zip(val(*b)).map(|(g, y)| g * y).collect()));
                }
                if wants(*b) {
                    out.push((*b, g.iter().zip(val(*a)).map(|(g, x)| g * x).collect()));
                }
            }
            Op::Scale(a, s) => out.push((*a, g.iter().map(|g| g * s).collect())),
            Op::OneMinus(a) => out.push((*a, g.iter().map(|g| -g).collect())),
            Op::Relu(a) => out.push((
                *a,
                g.iter()
                    .zip(val(*a))
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect(),
            )),
            Op::Sigmoid(a) => out.push((
                *a,
                g.iter()
                    .zip(node.value.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect(),
            )),
            Op::Concat(a, b) => {
                let p = self.nodes[a.0].value.shape()[1];
                let q = self.nodes[b.0].value.shape()[1];
                let w = p + q;
                if wants(*a) {
                    out.push((*a, g.chunks_exact(w.max(1)).flat_map(|r| r[..p].iter().copied()).collect()));
                }
                if wants(*b) {
                    out.push((*b, g.chunks_exact(w.max(1)).flat_map(|r| r[p..].iter().copied()).collect()));
                }
            }
            Op::Embedding { table, ids } => {
                let d = node.value.shape()[1];
                let mut dt = vec![0.0; self.nodes[table.0].value.numel()];
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..d {
                        dt[id * d + c] += g[r * d + c];
                    }
                }
                out.push((*table, dt));
            }
            Op::SoftmaxRows(a) => {
                let n = node.value.shape()[1];
                let y = node.value.data();
                let mut dx = vec![0.0; y.len()];
                if n > 0 {
                    for ((dr, yr), gr) in dx.chunks_exact_mut(n).zip(y.chunks_exact(n)).zip(g.chunks_exact(n)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        for c in 0..n {
                            dr[c] = yr[c] * (gr[c] - dot);
                        }
                    }
                }
                out.push((*a, dx));
            }
            Op::LayerNorm {
                a,
                gain,
                xhat,
                inv_std,
                bias,
            } => {
                let n = node.value.shape()[1];
                let gv = val(*gain);
                if wants(*a) {
                    let mut dx = vec![0.0; xhat.len()];
                    for (r, is) in inv_std.iter().enumerate() {
                        let (gr, hr) = (&g[r * n..(r + 1) * n], &xhat[r * n..(r + 1) * n]);
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for c in 0..n {
                            let dh = gr[c] * gv[c];
                            mean_dh += dh;
                            mean_dh_h += dh * hr[c];
                        }
                        mean_dh /= n as f64;
                        mean_dh_h /= n as f64;
                        for c in 0..n {
                            let dh = gr[c] * gv[c];
                            dx[r * n + c] = is * (dh - mean_dh - hr[c] * mean_dh_h);
                        }
                    }
                    out.push((*a, dx));
                }
                if wants(*gain) {
                    let mut dg = vec![0.0; n];
                    for (gr, hr) in g.chunks_exact(n).zip(xhat.chunks_exact(n)) {
                        for c in 0..n {
                            dg[c] += gr[c] * hr[c];
                        }
                    }
                    out.push((*gain, dg));
                }
                if wants(*bias) {
                    let mut db = vec![0.0; n];
                    for gr in g.chunks_exact(n) {
                        for c in 0..n {
                            db[c] += gr[c];
                        }
                    }
                    out.push((*bias, db));
                }
            }
            Op::Attention {
                q,
                k,
                v,
                layout,
                probs,
            } => {
                let d = node.value.shape()[1];
                let (batch, n, heads) = (layout.batch, layout.seq_len, layout.heads);
                let dk = d / heads;
                let scale = 1.0 / libm::sqrt(dk as f64);
                let (qd, kd, vd) = (val(*q), val(*k), val(*v));
                let mut dq = vec![0.0; qd.len()];
                let mut dkm = vec![0.0; kd.len()];
                let mut dv = vec![0.0; vd.len()];
                let mut dp = vec![0.0; n * n];
                let rm = Layout::row_major(d);
                let rt = Layout { rs: 1, cs: d };
                let pn = Layout::row_major(n);
                for b in 0..batch {
                    for h in 0..heads {
                        let off = b * n * d + h * dk;
                        let p = &probs[(b * heads + h) * n * n..(b * heads + h + 1) * n * n];
                        // dP = dO·Vᵀ, dV = Pᵀ·dO
                        gemm(n, dk, n, 1.0, &g[off..], rm, &vd[off..], rt, 0.0, &mut dp, pn);
                        gemm(n, n, dk, 1.0, p, Layout::transposed(n), &g[off..], rm, 1.0, &mut dv[off..], rm);
                        // dS = P ⊙ (dP − rowsum(dP ⊙ P)), folded with the 1/√d_k scale
                        for (dr, pr) in dp.chunks_exact_mut(n).zip(p.chunks_exact(n)) {
                            let dot: f64 = dr.iter().zip(pr).map(|(a, b)| a * b).sum();
                            for c in 0..n {
                                dr[c] = pr[c] * (dr[c] - dot) * scale;
                            }
                        }
                        gemm(n, n, dk, 1.0, &dp, pn, &kd[off..], rm, 1.0, &mut dq[off..], rm);
                        gemm(n, n, dk, 1.0, &dp, Layout::transposed(n), &qd[off..], rm, 1.0, &mut dkm[off..], rm);
                    }
                }
                // q, k and v may be the same node (self-attention on one
                // projection); accumulate handles that.
                for (id, delta) in [(*q, dq), (*k, dkm), (*v, dv)] {
                    if wants(id) {
                        out.push((id, delta));
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                probs,
                count,
            } => {
                let c = self.nodes[logits.0].value.shape()[1];
                let s = g[0] / *count as f64;
                let mut dx = vec![0.0; probs.len()];
                for r in 0..targets.len() {
                    if !mask[r] {
                        continue;
                    }
                    for j in 0..c {
                        dx[r * c + j] = probs[r * c + j] * s;
                    }
                    dx[r * c + targets[r]] -= s;
                }
                out.push((*logits, dx));
            }
            Op::Sum(a) => out.push((*a, vec![g[0]; self.nodes[a.0].value.numel()])),
        }
        out
    }
}

/// Logistic function, evaluated on the side that cannot overflow.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = row.iter().map(|x| libm::exp(x - max)).sum();
    max + libm::log(s)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in row.iter_mut() {
        *x = libm::exp(*x - max);
        s += *x;
    }
    for x in row.iter_mut() {
        *x /= s;
    }
}

fn masked_softmax_in_place(row: &mut [f64], mask: &[bool]) {
    let max = row
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(x, _)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (x, &m) in row.iter_mut().zip(mask) {
        *x = if m { libm::exp(*x - max) } else { 0.0 };
        s += *x;
    }
    if s > 0.0 {
        for x in row.iter_mut() {
            *x /= s;
        }
    }
}
