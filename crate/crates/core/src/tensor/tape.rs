use std::collections::BTreeMap;

use super::kernels::{dot, gemm_acc, gemm_nt_acc, gemm_tn_acc};
use super::{matmul_dims, Result, Scalar, Tensor, TensorError};

/// Layer-norm variance floor.
pub const LN_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sum(Var),
    Gelu(Var),
    Softplus(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    Softmax(Var),
    Embedding { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, mask: Vec<bool>, probs: Vec<T>, count: usize },
    Attention { qkv: Var, heads: usize, probs: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records a forward computation; [`Tape::backward`] replays it in exact
/// reverse order of recording.
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    names: BTreeMap<String, Var>,
    consumed: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn check_finite<T: Scalar>(data: &[T], op: &'static str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

fn dim_err(op: &'static str, detail: String) -> TensorError {
    TensorError::Dimension { op, detail }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), names: BTreeMap::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var], name: &'static str) -> Result<Var> {
        check_finite(value.data(), name)?;
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Registers a named trainable leaf; its gradient is reported under `name`.
    pub fn param(&mut self, name: &str, value: Tensor<T>) -> Var {
        let v = self.leaf(value, true);
        self.names.insert(name.to_string(), v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k, n) = matmul_dims(self.value(a), self.value(b))?;
        let mut out = vec![T::zero(); m * n];
        gemm_acc(&mut out, self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), &[a, b], "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(dim_err("add", format!("{:?} + {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p + q).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        self.push(t, Op::Add(a, b), &[a, b], "add")
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        let n = x.cols();
        if b.numel() != n || x.shape().is_empty() {
            return Err(dim_err("add_bias", format!("{:?} + {:?}", x.shape(), b.shape())));
        }
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, &bv) in row.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
        let t = Tensor::new(x.shape().to_vec(), data)?;
        self.push(t, Op::AddBias(a, bias), &[a, bias], "add_bias")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(dim_err("mul", format!("{:?} * {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        self.push(t, Op::Mul(a, b), &[a, b], "mul")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let sc = T::cst(s);
        let x = self.value(a);
        let t = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| v * sc).collect())?;
        self.push(t, Op::Scale(a, s), &[a], "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let cc = T::cst(c);
        let x = self.value(a);
        let t = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| v + cc).collect())?;
        self.push(t, Op::AddScalar(a), &[a], "add_scalar")
    }

    /// Sum of all elements, ascending index order.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let mut acc = T::zero();
        for &v in self.value(a).data() {
            acc += v;
        }
        self.push(Tensor::scalar(acc), Op::Sum(a), &[a], "sum")
    }

    /// GELU, tanh form: `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let data = x.data().iter().map(|&v| gelu(v)).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        self.push(t, Op::Gelu(a), &[a], "gelu")
    }

    /// `ln(1 + eˣ)`, computed as `max(x,0) + ln1p(e^{-|x|})`.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let data = x.data().iter().map(|&v| softplus(v)).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        self.push(t, Op::Softplus(a), &[a], "softplus")
    }

    /// Row-wise layer norm with affine gain and bias; eps = 1e-5, biased variance.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let n = xv.cols();
        if self.value(gain).numel() != n || self.value(bias).numel() != n {
            return Err(dim_err("layer_norm", format!("x {:?}, gain/bias len != {n}", xv.shape())));
        }
        let rows = xv.rows();
        let inv_n = T::cst(1.0 / n as f64);
        let eps = T::cst(LN_EPS);
        let mut xhat = vec![T::zero(); rows * n];
        let mut rstd = vec![T::zero(); rows];
        for r in 0..rows {
            let row = &xv.data()[r * n..(r + 1) * n];
            let mut mean = T::zero();
            for &v in row {
                mean += v;
            }
            mean *= inv_n;
            let mut var = T::zero();
            for &v in row {
                let d = v - mean;
                var += d * d;
            }
            var *= inv_n;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for (h, &v) in xhat[r * n..(r + 1) * n].iter_mut().zip(row) {
                *h = (v - mean) * rs;
            }
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut out = xhat.clone();
        for row in out.chunks_mut(n) {
            for j in 0..n {
                row[j] = row[j] * g[j] + b[j];
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), out)?;
        self.push(t, Op::LayerNorm { x, gain, bias, xhat, rstd }, &[x, gain, bias], "layer_norm")
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let n = x.cols();
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(n) {
            softmax_in_place(row);
        }
        let t = Tensor::new(x.shape().to_vec(), data)?;
        self.push(t, Op::Softmax(a), &[a], "softmax")
    }

    /// Gathers rows of a `V×d` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if tv.shape().len() != 2 {
            return Err(dim_err("embedding", format!("table shape {:?}", tv.shape())));
        }
        let (vocab, d) = (tv.shape()[0], tv.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(TensorError::Index { op: "embedding", index: id, bound: vocab });
            }
            out.extend_from_slice(&tv.data()[id * d..(id + 1) * d]);
        }
        let t = Tensor::new(vec![ids.len(), d], out)?;
        self.push(t, Op::Embedding { table, ids: ids.to_vec() }, &[table], "embedding")
    }

    /// Mean negative log-likelihood of `targets` over rows where `mask` is set.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let lv = self.value(logits);
        let (rows, vocab) = (lv.rows(), lv.cols());
        if targets.len() != rows || mask.len() != rows {
            return Err(dim_err(
                "cross_entropy",
                format!("{rows} rows, {} targets, {} mask", targets.len(), mask.len()),
            ));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(TensorError::DegenerateBatch);
        }
        let mut probs = vec![T::zero(); rows * vocab];
        let mut total = T::zero();
        for r in 0..rows {
            if !mask[r] {
                continue;
            }
            let t = targets[r];
            if t >= vocab {
                return Err(TensorError::Index { op: "cross_entropy", index: t, bound: vocab });
            }
            let row = &lv.data()[r * vocab..(r + 1) * vocab];
            let p = &mut probs[r * vocab..(r + 1) * vocab];
            p.copy_from_slice(row);
            let lse = log_sum_exp(row);
            total += lse - row[t];
            softmax_in_place(p);
        }
        let loss = total / T::cst(count as f64);
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), mask: mask.to_vec(), probs, count };
        self.push(Tensor::scalar(loss), op, &[logits], "cross_entropy")
    }

    /// Multi-head causal self-attention over a fused `[T, 3d]` projection laid
    /// out as `[q | k | v]`, head `h` owning columns `h·d/H .. (h+1)·d/H` of each.
    pub fn causal_attention(&mut self, qkv: Var, heads: usize) -> Result<Var> {
        let xv = self.value(qkv);
        let (t_len, three_d) = (xv.rows(), xv.cols());
        if xv.shape().len() != 2 || three_d % 3 != 0 || heads == 0 || (three_d / 3) % heads != 0 {
            return Err(dim_err("causal_attention", format!("qkv {:?}, heads {heads}", xv.shape())));
        }
        let d = three_d / 3;
        let dh = d / heads;
        let scale = T::cst(1.0 / (dh as f64).sqrt());
        let x = xv.data();
        let mut probs = vec![T::zero(); heads * t_len * t_len];
        let mut out = vec![T::zero(); t_len * d];
        for h in 0..heads {
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            for i in 0..t_len {
                let q = &x[i * three_d + qo..i * three_d + qo + dh];
                let p = &mut probs[(h * t_len + i) * t_len..(h * t_len + i) * t_len + i + 1];
                for (j, pj) in p.iter_mut().enumerate() {
                    let k = &x[j * three_d + ko..j * three_d + ko + dh];
                    *pj = dot(q, k) * scale;
                }
                softmax_in_place(p);
                let o = &mut out[i * d + h * dh..i * d + (h + 1) * dh];
                for (j, &pj) in p.iter().enumerate() {
                    let v = &x[j * three_d + vo..j * three_d + vo + dh];
                    for (ov, &vv) in o.iter_mut().zip(v) {
                        *ov += pj * vv;
                    }
                }
            }
        }
        let t = Tensor::new(vec![t_len, d], out)?;
        self.push(t, Op::Attention { qkv, heads, probs }, &[qkv], "causal_attention")
    }

    /// Reverse-mode sweep from a scalar `loss`. May run once per tape.
    pub fn backward(&mut self, loss: Var) -> Result<Grads<T>> {
        if self.consumed {
            return Err(TensorError::BackwardTwice);
        }
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NotScalar(self.value(loss).shape().to_vec()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut leaves: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    leaves[idx] = Some(Tensor::new(node.value.shape().to_vec(), g)?);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    if self.nodes[a.0].needs_grad {
                        let ga = acc_slot(&mut grads, &self.nodes, *a);
                        gemm_nt_acc(ga, &g, bv.data(), m, n, k);
                    }
                    if self.nodes[b.0].needs_grad {
                        let gb = acc_slot(&mut grads, &self.nodes, *b);
                        gemm_tn_acc(gb, av.data(), &g, m, k, n);
                    }
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        if self.nodes[v.0].needs_grad {
                            add_into(acc_slot(&mut grads, &self.nodes, *v), &g);
                        }
                    }
                }
                Op::AddBias(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        add_into(acc_slot(&mut grads, &self.nodes, *a), &g);
                    }
                    if self.nodes[b.0].needs_grad {
                        let gb = acc_slot(&mut grads, &self.nodes, *b);
                        let n = gb.len();
                        for row in g.chunks(n) {
                            add_into(gb, row);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                    if self.nodes[a.0].needs_grad {
                        let ga = acc_slot(&mut grads, &self.nodes, *a);
                        for ((o, &gi), &bi) in ga.iter_mut().zip(&g).zip(bv) {
                            *o += gi * bi;
                        }
                    }
                    if self.nodes[b.0].needs_grad {
                        let gb = acc_slot(&mut grads, &self.nodes, *b);
                        for ((o, &gi), &ai) in gb.iter_mut().zip(&g).zip(av) {
                            *o += gi * ai;
                        }
                    }
                }
                Op::Scale(a, s) => {
                    let sc = T::cst(*s);
                    let ga = acc_slot(&mut grads, &self.nodes, *a);
                    for (o, &gi) in ga.iter_mut().zip(&g) {
                        *o += gi * sc;
                    }
                }
                Op::AddScalar(a) => {
                    add_into(acc_slot(&mut grads, &self.nodes, *a), &g);
                }
                Op::Sum(a) => {
                    let ga = acc_slot(&mut grads, &self.nodes, *a);
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }
                Op::Gelu(a) => {
                    let xv = self.nodes[a.0].value.data();
                    let ga = acc_slot(&mut grads, &self.nodes, *a);
                    for ((o, &gi), &x) in ga.iter_mut().zip(&g).zip(xv) {
                        *o += gi * gelu_grad(x);
                    }
                }
                Op::Softplus(a) => {
                    let xv = self.nodes[a.0].value.data();
                    let ga = acc_slot(&mut grads, &self.nodes, *a);
                    for ((o, &gi), &x) in ga.iter_mut().zip(&g).zip(xv) {
                        *o += gi * sigmoid(x);
                    }
                }
                Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                    let n = self.nodes[gain.0].value.numel();
                    let gv = self.nodes[gain.0].value.data();
                    if self.nodes[gain.0].needs_grad {
                        let gg = acc_slot(&mut grads, &self.nodes, *gain);
                        for (grow, hrow) in g.chunks(n).zip(xhat.chunks(n)) {
                            for j in 0..n {
                                gg[j] += grow[j] * hrow[j];
                            }
                        }
                    }
                    if self.nodes[bias.0].needs_grad {
                        let gb = acc_slot(&mut grads, &self.nodes, *bias);
                        for grow in g.chunks(n) {
                            add_into(gb, grow);
                        }
                    }
                    if self.nodes[x.0].needs_grad {
                        let gx = acc_slot(&mut grads, &self.nodes, *x);
                        let inv_n = T::cst(1.0 / n as f64);
                        let mut gh = vec![T::zero(); n];
                        for (r, grow) in g.chunks(n).enumerate() {
                            let hrow = &xhat[r * n..(r + 1) * n];
                            let mut m1 = T::zero();
                            let mut m2 = T::zero();
                            for j in 0..n {
                                gh[j] = grow[j] * gv[j];
                                m1 += gh[j];
                                m2 += gh[j] * hrow[j];
                            }
                            m1 *= inv_n;
                            m2 *= inv_n;
                            let out = &mut gx[r * n..(r + 1) * n];
                            for j in 0..n {
                                out[j] += rstd[r] * (gh[j] - m1 - hrow[j] * m2);
                            }
                        }
                    }
                }
                Op::Softmax(a) => {
                    let y = node.value.data();
                    let n = node.value.cols();
                    let ga = acc_slot(&mut grads, &self.nodes, *a);
                    for ((grow, yrow), orow) in g.chunks(n).zip(y.chunks(n)).zip(ga.chunks_mut(n)) {
                        let s = dot(grow, yrow);
                        for j in 0..n {
                            orow[j] += yrow[j] * (grow[j] - s);
                        }
                    }
                }
                Op::Embedding { table, ids } => {
                    let d = self.nodes[table.0].value.cols();
                    let gt = acc_slot(&mut grads, &self.nodes, *table);
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                }
                Op::CrossEntropy { logits, targets, mask, probs, count } => {
                    let vocab = self.nodes[logits.0].value.cols();
                    let coef = g[0] / T::cst(*count as f64);
                    let gl = acc_slot(&mut grads, &self.nodes, *logits);
                    for r in 0..mask.len() {
                        if !mask[r] {
                            continue;
                        }
                        let p = &probs[r * vocab..(r + 1) * vocab];
                        let o = &mut gl[r * vocab..(r + 1) * vocab];
                        for j in 0..vocab {
                            o[j] += coef * p[j];
                        }
                        o[targets[r]] -= coef;
                    }
                }
                Op::Attention { qkv, heads, probs } => {
                    let xv = &self.nodes[qkv.0].value;
                    let (t_len, three_d) = (xv.rows(), xv.cols());
                    let d = three_d / 3;
                    let dh = d / heads;
                    let scale = T::cst(1.0 / (dh as f64).sqrt());
                    let x = xv.data();
                    let gx = acc_slot(&mut grads, &self.nodes, *qkv);
                    let mut gp = vec![T::zero(); t_len];
                    for h in 0..*heads {
                        let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
                        for i in 0..t_len {
                            let go = &g[i * d + h * dh..i * d + (h + 1) * dh];
                            let p = &probs[(h * t_len + i) * t_len..(h * t_len + i) * t_len + i + 1];
                            let mut s = T::zero();
                            for j in 0..=i {
                                let v = &x[j * three_d + vo..j * three_d + vo + dh];
                                gp[j] = dot(go, v);
                                s += p[j] * gp[j];
                                let gv = &mut gx[j * three_d + vo..j * three_d + vo + dh];
                                for (o, &gov) in gv.iter_mut().zip(go) {
                                    *o += p[j] * gov;
                                }
                            }
                            for j in 0..=i {
                                let gs = p[j] * (gp[j] - s) * scale;
                                let (qi, kj) = (i * three_d + qo, j * three_d + ko);
                                for c in 0..dh {
                                    let kv = x[kj + c];
                                    let qv = x[qi + c];
                                    gx[qi + c] += gs * kv;
                                    gx[kj + c] += gs * qv;
                                }
                            }
                        }
                    }
                }
            }
        }

        // Leaves that require grad but were not reached get zeros.
        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.needs_grad && leaves[idx].is_none() {
                leaves[idx] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Grads { by_node: leaves, names: self.names.clone() })
    }
}

fn acc_slot<'g, T: Scalar>(grads: &'g mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var) -> &'g mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.numel()])
}

#[inline]
fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[inline]
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let (c, k, half) = (T::cst(GELU_C), T::cst(GELU_K), T::cst(0.5));
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

#[inline]
fn gelu_grad<T: Scalar>(x: T) -> T {
    let (c, k, half) = (T::cst(GELU_C), T::cst(GELU_K), T::cst(0.5));
    let t = (c * (x + k * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::cst(3.0) * k * x * x)
}

#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for &v in row {
        z += (v - m).exp();
    }
    m + z.ln()
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    let inv = T::one() / z;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Gradients of the trainable leaves after a backward sweep.
pub struct Grads<T: Scalar = f32> {
    by_node: Vec<Option<Tensor<T>>>,
    names: BTreeMap<String, Var>,
}

impl<T: Scalar> Grads<T> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.by_node.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn named(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.get(name).and_then(|v| self.wrt(*v))
    }

    /// Named gradients in sorted name order.
    pub fn into_named(mut self) -> BTreeMap<String, Tensor<T>> {
        let mut out = BTreeMap::new();
        for (name, v) in &self.names {
            if let Some(g) = self.by_node[v.0].take() {
                out.insert(name.clone(), g);
            }
        }
        out
    }
}
