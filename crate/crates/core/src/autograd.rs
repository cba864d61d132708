//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is an append-only tape. Every operation records its output
//! value and enough context to run its vector-Jacobian product; node order is
//! therefore a topological order and [`Graph::backward`] is a single reverse
//! sweep. Nodes whose inputs carry no gradient are never visited on the way
//! back, which is how the frozen backbone stays out of the update.

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, matmul_acc, matmul_at_acc, matmul_bt, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add {
        a: Var,
        b: Var,
    },
    AddRow {
        x: Var,
        row: Var,
    },
    Affine {
        x: Var,
        scale: f64,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    QuickGelu {
        x: Var,
    },
    Attention {
        qkv: Var,
        heads: usize,
        probs: Vec<f64>,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    GatherRows {
        x: Var,
        index: Vec<usize>,
    },
    ConcatRows {
        parts: Vec<Var>,
    },
    Reshape {
        x: Var,
    },
    CosineRows {
        a: Var,
        b: Var,
    },
    CosineMatrix {
        a: Var,
        b: Var,
    },
    LogSoftmaxRows {
        x: Var,
        temperature: f64,
    },
    WeightedSum {
        x: Var,
        weights: Vec<f64>,
    },
    Combine {
        terms: Vec<(Var, f64)>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that required them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` means no path from the loss reaches `var`, i.e. an exact zero gradient.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Whether the gradient at `var` is exactly zero (absent or all `0.0`).
    pub fn is_exact_zero(&self, var: Var) -> bool {
        self.get(var)
            .map(|g| g.data().iter().all(|&v| v == 0.0))
            .unwrap_or(true)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const GELU_ALPHA: f64 = 1.702;

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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        let node = self.nodes.len();
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name, node });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(node))
    }

    /// `y = x·Wᵀ + b` over the rows of `x`; `W` is `[out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if wv.shape().len() != 2 || xv.cols() != wv.shape()[1] {
            return Err(Error::dim(
                "linear",
                format!("input {:?} against weight {:?}", xv.shape(), wv.shape()),
            ));
        }
        let (n, k, m) = (xv.rows(), xv.cols(), wv.shape()[0]);
        let mut out = vec![0.0; n * m];
        matmul_bt(xv.data(), wv.data(), n, k, m, &mut out);
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.len() != m {
                return Err(Error::dim("linear", format!("bias {:?} for {m} outputs", bv.shape())));
            }
            for row in out.chunks_mut(m) {
                axpy(1.0, bv.data(), row);
            }
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = m;
        let rg = self.rg(&[x, w]) || b.map(|b| self.requires_grad(b)).unwrap_or(false);
        self.push("linear", Tensor::from_parts(shape, out), Op::Linear { x, w, b }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("add", av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::from_parts(av.shape().to_vec(), data);
        let rg = self.rg(&[a, b]);
        self.push("add", value, Op::Add { a, b }, rg)
    }

    /// Adds a length-`cols` vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.len() != xv.cols() {
            return Err(Error::dim("add_row", format!("{:?} + {:?}", xv.shape(), rv.shape())));
        }
        let mut data = xv.data().to_vec();
        for r in data.chunks_mut(rv.len()) {
            axpy(1.0, rv.data(), r);
        }
        let value = Tensor::from_parts(xv.shape().to_vec(), data);
        let rg = self.rg(&[x, row]);
        self.push("add_row", value, Op::AddRow { x, row }, rg)
    }

    /// Elementwise `scale·x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| scale * v + shift).collect();
        let value = Tensor::from_parts(xv.shape().to_vec(), data);
        let rg = self.rg(&[x]);
        self.push("affine", value, Op::Affine { x, scale }, rg)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.affine(x, s, 0.0)
    }

    /// Normalizes each row to zero mean and unit variance, then applies `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::Parameter(format!("layer_norm eps must be positive, got {eps}")));
        }
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let d = xv.cols();
        if gv.len() != d || bv.len() != d {
            return Err(Error::dim(
                "layer_norm",
                format!("x {:?}, gamma {:?}, beta {:?}", xv.shape(), gv.shape(), bv.shape()),
            ));
        }
        let n = xv.rows();
        let mut xhat = vec![0.0; n * d];
        let mut rstd = vec![0.0; n];
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let r = 1.0 / (var + eps).sqrt();
            rstd[i] = r;
            for j in 0..d {
                let h = (row[j] - mean) * r;
                xhat[i * d + j] = h;
                out[i * d + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        let value = Tensor::from_parts(xv.shape().to_vec(), out);
        let rg = self.rg(&[x, gamma, beta]);
        self.push(
            "layer_norm",
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        )
    }

    /// `x·σ(1.702·x)`, the sigmoid approximation of GELU.
    pub fn quick_gelu(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v * sigmoid(GELU_ALPHA * v)).collect();
        let value = Tensor::from_parts(xv.shape().to_vec(), data);
        let rg = self.rg(&[x]);
        self.push("quick_gelu", value, Op::QuickGelu { x }, rg)
    }

    /// Scaled dot-product attention over a packed `[n, 3·w]` query/key/value
    /// matrix, split into `heads` heads. With `causal`, row `i` attends only to
    /// rows `0..=i`.
    pub fn attention(&mut self, qkv: Var, heads: usize, causal: bool) -> Result<Var> {
        let v = self.value(qkv);
        let (n, c) = (v.rows(), v.cols());
        if heads == 0 || c % 3 != 0 || (c / 3) % heads != 0 {
            return Err(Error::Config(format!(
                "packed width {c} cannot be split into q/k/v with {heads} heads"
            )));
        }
        let w = c / 3;
        let dh = w / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let data = v.data();
        let mut probs = vec![0.0; heads * n * n];
        let mut out = vec![0.0; n * w];
        for h in 0..heads {
            let (qo, ko, vo) = (h * dh, w + h * dh, 2 * w + h * dh);
            let p = &mut probs[h * n * n..(h + 1) * n * n];
            for i in 0..n {
                let q = &data[i * c + qo..i * c + qo + dh];
                let limit = if causal { i + 1 } else { n };
                let prow = &mut p[i * n..(i + 1) * n];
                let mut max = f64::NEG_INFINITY;
                for j in 0..limit {
                    let s = dot(q, &data[j * c + ko..j * c + ko + dh]) * scale;
                    prow[j] = s;
                    max = max.max(s);
                }
                let mut z = 0.0;
                for pj in prow.iter_mut().take(limit) {
                    *pj = (*pj - max).exp();
                    z += *pj;
                }
                let orow = &mut out[i * w + h * dh..i * w + (h + 1) * dh];
                for j in 0..limit {
                    prow[j] /= z;
                    axpy(prow[j], &data[j * c + vo..j * c + vo + dh], orow);
                }
            }
        }
        let value = Tensor::from_parts(vec![n, w], out);
        let rg = self.rg(&[qkv]);
        self.push("attention", value, Op::Attention { qkv, heads, probs }, rg)
    }

    /// Attention weights recorded by an [`Graph::attention`] node, `[heads, n, n]`.
    pub fn attention_weights(&self, v: Var) -> Option<Tensor> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, heads, .. } => {
                let n = self.value(v).rows();
                Some(Tensor::from_parts(vec![*heads, n, n], probs.clone()))
            }
            _ => None,
        }
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(x).slice_rows(start, len)?;
        let rg = self.rg(&[x]);
        self.push("slice_rows", value, Op::SliceRows { x, start }, rg)
    }

    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let (n, c) = (xv.rows(), xv.cols());
        if index.is_empty() || index.iter().any(|&i| i >= n) {
            return Err(Error::dim("gather_rows", format!("index {index:?} into {n} rows")));
        }
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index {
            data.extend_from_slice(xv.row(i));
        }
        let value = Tensor::from_parts(vec![index.len(), c], data);
        let rg = self.rg(&[x]);
        self.push(
            "gather_rows",
            value,
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
            rg,
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("concat_rows", "no parts"))?;
        let c = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != c {
                return Err(Error::dim("concat_rows", format!("width {} vs {c}", v.cols())));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let value = Tensor::from_parts(vec![rows, c], data);
        let rg = self.rg(parts);
        self.push(
            "concat_rows",
            value,
            Op::ConcatRows {
                parts: parts.to_vec(),
            },
            rg,
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        let rg = self.rg(&[x]);
        self.push("reshape", value, Op::Reshape { x }, rg)
    }

    /// Row-wise cosine similarity of two equally shaped matrices, `[n]`.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("cosine_rows", av, bv)?;
        let n = av.rows();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(crate::nn::cosine_similarity(av.row(i), bv.row(i))?);
        }
        let value = Tensor::from_parts(vec![n], out);
        let rg = self.rg(&[a, b]);
        self.push("cosine_rows", value, Op::CosineRows { a, b }, rg)
    }

    /// All-pairs cosine similarity between rows of `a: [n,d]` and `b: [m,d]`, `[n,m]`.
    pub fn cosine_matrix(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(Error::dim("cosine_matrix", format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let (n, m) = (av.rows(), bv.rows());
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                out.push(crate::nn::cosine_similarity(av.row(i), bv.row(j))?);
            }
        }
        let value = Tensor::from_parts(vec![n, m], out);
        let rg = self.rg(&[a, b]);
        self.push("cosine_matrix", value, Op::CosineMatrix { a, b }, rg)
    }

    /// Row-wise `log softmax(x / temperature)`.
    pub fn log_softmax_rows(&mut self, x: Var, temperature: f64) -> Result<Var> {
        if temperature <= 0.0 {
            return Err(Error::Parameter(format!("temperature must be positive, got {temperature}")));
        }
        let xv = self.value(x);
        let c = xv.cols();
        let mut out = vec![0.0; xv.len()];
        for (i, orow) in out.chunks_mut(c).enumerate() {
            let row = xv.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / temperature;
            let lse = max
                + row
                    .iter()
                    .map(|v| (v / temperature - max).exp())
                    .sum::<f64>()
                    .ln();
            for (o, v) in orow.iter_mut().zip(row) {
                *o = v / temperature - lse;
            }
        }
        let value = Tensor::from_parts(xv.shape().to_vec(), out);
        let rg = self.rg(&[x]);
        self.push("log_softmax_rows", value, Op::LogSoftmaxRows { x, temperature }, rg)
    }

    /// Scalar `Σ weights[i]·x[i]` over the flattened values of `x`.
    pub fn weighted_sum(&mut self, x: Var, weights: &[f64]) -> Result<Var> {
        let xv = self.value(x);
        if weights.len() != xv.len() {
            return Err(Error::dim(
                "weighted_sum",
                format!("{} weights for {} values", weights.len(), xv.len()),
            ));
        }
        let value = Tensor::scalar(dot(xv.data(), weights));
        let rg = self.rg(&[x]);
        self.push(
            "weighted_sum",
            value,
            Op::WeightedSum {
                x,
                weights: weights.to_vec(),
            },
            rg,
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        self.weighted_sum(x, &vec![1.0; n])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        self.weighted_sum(x, &vec![1.0 / n as f64; n])
    }

    /// Linear combination `Σ coef·term` of scalar nodes.
    pub fn combine(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for &(v, c) in terms {
            let t = self.value(v);
            if t.len() != 1 {
                return Err(Error::dim("combine", format!("term of shape {:?} is not scalar", t.shape())));
            }
            total += c * t.data()[0];
        }
        let rg = self.rg(&terms.iter().map(|t| t.0).collect::<Vec<_>>());
        self.push(
            "combine",
            Tensor::scalar(total),
            Op::Combine {
                terms: terms.to_vec(),
            },
            rg,
        )
    }

    /// Gradients of the scalar `loss` with respect to every node on the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::dim("backward", "loss must be a scalar"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &dy, &mut grads);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.map(|data| Tensor::from_parts(self.nodes[i].value.shape().to_vec(), data))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn grad_slot<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
    }

    fn propagate(&self, node: &Node, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, k, m) = (xv.rows(), xv.cols(), wv.shape()[0]);
                if let Some(g) = self.grad_slot(grads, *x) {
                    matmul_acc(dy, wv.data(), n, m, k, g);
                }
                if let Some(g) = self.grad_slot(grads, *w) {
                    matmul_at_acc(dy, xv.data(), n, m, k, g);
                }
                if let Some(b) = b {
                    if let Some(g) = self.grad_slot(grads, *b) {
                        for row in dy.chunks(m) {
                            axpy(1.0, row, g);
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [a, b] {
                    if let Some(g) = self.grad_slot(grads, *v) {
                        axpy(1.0, dy, g);
                    }
                }
            }
            Op::AddRow { x, row } => {
                if let Some(g) = self.grad_slot(grads, *x) {
                    axpy(1.0, dy, g);
                }
                if let Some(g) = self.grad_slot(grads, *row) {
                    let c = g.len();
                    for r in dy.chunks(c) {
                        axpy(1.0, r, g);
                    }
                }
            }
            Op::Affine { x, scale } => {
                if let Some(g) = self.grad_slot(grads, *x) {
                    axpy(*scale, dy, g);
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let d = self.value(*gamma).len();
                let gv = self.value(*gamma).data();
                if let Some(g) = self.grad_slot(grads, *x) {
                    for (i, r) in rstd.iter().enumerate() {
                        let dyr = &dy[i * d..(i + 1) * d];
                        let xh = &xhat[i * d..(i + 1) * d];
                        let mut mean_dxh = 0.0;
                        let mut mean_dxh_xh = 0.0;
                        for j in 0..d {
                            let dxh = dyr[j] * gv[j];
                            mean_dxh += dxh;
                            mean_dxh_xh += dxh * xh[j];
                        }
                        mean_dxh /= d as f64;
                        mean_dxh_xh /= d as f64;
                        let gr = &mut g[i * d..(i + 1) * d];
                        for j in 0..d {
                            let dxh = dyr[j] * gv[j];
                            gr[j] += r * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                        }
                    }
                }
                if let Some(g) = self.grad_slot(grads, *gamma) {
                    for (dyr, xh) in dy.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            g[j] += dyr[j] * xh[j];
                        }
                    }
                }
                if let Some(g) = self.grad_slot(grads, *beta) {
                    for dyr in dy.chunks(d) {
                        axpy(1.0, dyr, g);
                    }
                }
            }
            Op::QuickGelu { x } => {
                let xv = self.value(*x).data();
                if let Some(g) = self.grad_slot(grads, *x) {
                    for ((gi, &v), &d) in g.iter_mut().zip(xv).zip(dy) {
                        let s = sigmoid(GELU_ALPHA * v);
                        *gi += d * (s + GELU_ALPHA * v * s * (1.0 - s));
                    }
                }
            }
            Op::Attention { qkv, heads, probs } => {
                let v = self.value(*qkv);
                let (n, c) = (v.rows(), v.cols());
                let data = v.data();
                let w = c / 3;
                let dh = w / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let Some(g) = self.grad_slot(grads, *qkv) else {
                    return;
                };
                let mut dp = vec![0.0; n];
                for h in 0..*heads {
                    let (qo, ko, vo) = (h * dh, w + h * dh, 2 * w + h * dh);
                    let p = &probs[h * n * n..(h + 1) * n * n];
                    for i in 0..n {
                        let dout = &dy[i * w + h * dh..i * w + (h + 1) * dh];
                        let prow = &p[i * n..(i + 1) * n];
                        // dP_ij = dout_i · v_j, dV_j += P_ij dout_i
                        let mut inner = 0.0;
                        for j in 0..n {
                            if prow[j] == 0.0 {
                                dp[j] = 0.0;
                                continue;
                            }
                            dp[j] = dot(dout, &data[j * c + vo..j * c + vo + dh]);
                            inner += dp[j] * prow[j];
                            axpy(prow[j], dout, &mut g[j * c + vo..j * c + vo + dh]);
                        }
                        // dS_ij = P_ij (dP_ij - Σ_k P_ik dP_ik)
                        for j in 0..n {
                            if prow[j] == 0.0 {
                                continue;
                            }
                            let ds = prow[j] * (dp[j] - inner) * scale;
                            axpy(ds, &data[j * c + ko..j * c + ko + dh], &mut g[i * c + qo..i * c + qo + dh]);
                            axpy(ds, &data[i * c + qo..i * c + qo + dh], &mut g[j * c + ko..j * c + ko + dh]);
                        }
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let c = self.value(*x).cols();
                if let Some(g) = self.grad_slot(grads, *x) {
                    axpy(1.0, dy, &mut g[start * c..start * c + dy.len()]);
                }
            }
            Op::GatherRows { x, index } => {
                let c = self.value(*x).cols();
                if let Some(g) = self.grad_slot(grads, *x) {
                    for (r, &i) in index.iter().enumerate() {
                        axpy(1.0, &dy[r * c..(r + 1) * c], &mut g[i * c..(i + 1) * c]);
                    }
                }
            }
            Op::ConcatRows { parts } => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    if let Some(g) = self.grad_slot(grads, *p) {
                        axpy(1.0, &dy[offset..offset + len], g);
                    }
                    offset += len;
                }
            }
            Op::Reshape { x } => {
                if let Some(g) = self.grad_slot(grads, *x) {
                    axpy(1.0, dy, g);
                }
            }
            Op::CosineRows { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let d = av.cols();
                for i in 0..av.rows() {
                    let (ar, br) = (av.row(i), bv.row(i));
                    cosine_vjp(ar, br, dy[i], grads, self, *a, *b, i * d, i * d);
                }
            }
            Op::CosineMatrix { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, m, d) = (av.rows(), bv.rows(), av.cols());
                for i in 0..n {
                    for j in 0..m {
                        cosine_vjp(av.row(i), bv.row(j), dy[i * m + j], grads, self, *a, *b, i * d, j * d);
                    }
                }
            }
            Op::LogSoftmaxRows { x, temperature } => {
                let y = &node.value;
                let c = y.cols();
                if let Some(g) = self.grad_slot(grads, *x) {
                    for (i, dyr) in dy.chunks(c).enumerate() {
                        let total: f64 = dyr.iter().sum();
                        let yr = y.row(i);
                        for j in 0..c {
                            g[i * c + j] += (dyr[j] - yr[j].exp() * total) / temperature;
                        }
                    }
                }
            }
            Op::WeightedSum { x, weights } => {
                if let Some(g) = self.grad_slot(grads, *x) {
                    axpy(dy[0], weights, g);
                }
            }
            Op::Combine { terms } => {
                for (v, coef) in terms {
                    if let Some(g) = self.grad_slot(grads, *v) {
                        g[0] += coef * dy[0];
                    }
                }
            }
        }
    }
}

/// Accumulates the vector-Jacobian product of `cos(a, b)` for one pair of rows.
#[allow(clippy::too_many_arguments)]
fn cosine_vjp(
    ar: &[f64],
    br: &[f64],
    upstream: f64,
    grads: &mut [Option<Vec<f64>>],
    graph: &Graph,
    a: Var,
    b: Var,
    a_off: usize,
    b_off: usize,
) {
    if upstream == 0.0 {
        return;
    }
    let na = dot(ar, ar).sqrt();
    let nb = dot(br, br).sqrt();
    let cos = dot(ar, br) / (na * nb);
    let d = ar.len();
    if let Some(g) = graph.grad_slot(grads, a) {
        for k in 0..d {
            g[a_off + k] += upstream * (br[k] / (na * nb) - cos * ar[k] / (na * na));
        }
    }
    if let Some(g) = graph.grad_slot(grads, b) {
        for k in 0..d {
            g[b_off + k] += upstream * (ar[k] / (na * nb) - cos * br[k] / (nb * nb));
        }
    }
}
