//! Layers of the dual encoder, written against the [`Graph`] tape.
//!
//! Parameter containers are generic over their leaf type: `T = Tensor` for
//! storage, `T = Var` once bound onto a graph for a forward pass.

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{dot, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const MLP_RATIO: usize = 4;

/// Named traversal over a parameter container.
pub trait ParamTree<T> {
    type Mapped<U>;

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T));
    fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> Self::Mapped<U>;
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

#[derive(Debug, Clone)]
pub struct LinearParams<T> {
    /// `[out, in]`
    pub weight: T,
    pub bias: Option<T>,
}

impl LinearParams<Tensor> {
    pub fn init(out: usize, input: usize, bias: bool, std: f64, rng: &mut Rng) -> Self {
        Self {
            weight: Tensor::trunc_normal(&[out, input], std, rng),
            bias: bias.then(|| Tensor::zeros(&[out])),
        }
    }
}

impl<T> ParamTree<T> for LinearParams<T> {
    type Mapped<U> = LinearParams<U>;

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        f(join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(join(prefix, "bias"), b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        f(join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(join(prefix, "bias"), b);
        }
    }

    fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> LinearParams<U> {
        LinearParams {
            weight: f(&self.weight),
            bias: self.bias.as_ref().map(f),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormParams<T> {
    pub gamma: T,
    pub beta: T,
}

impl LayerNormParams<Tensor> {
    pub fn init(d: usize) -> Self {
        Self {
            gamma: Tensor::full(&[d], 1.0),
            beta: Tensor::zeros(&[d]),
        }
    }
}

impl<T> ParamTree<T> for LayerNormParams<T> {
    type Mapped<U> = LayerNormParams<U>;

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        f(join(prefix, "gamma"), &self.gamma);
        f(join(prefix, "beta"), &self.beta);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        f(join(prefix, "gamma"), &mut self.gamma);
        f(join(prefix, "beta"), &mut self.beta);
    }

    fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> LayerNormParams<U> {
        LayerNormParams {
            gamma: f(&self.gamma),
            beta: f(&self.beta),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttentionParams<T> {
    /// Packed query/key/value projection, `[3w, w]`.
    pub qkv: LinearParams<T>,
    pub out: LinearParams<T>,
}

impl<T> ParamTree<T> for AttentionParams<T> {
    type Mapped<U> = AttentionParams<U>;

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        self.qkv.visit(&join(prefix, "qkv"), f);
        self.out.visit(&join(prefix, "out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        self.qkv.visit_mut(&join(prefix, "qkv"), f);
        self.out.visit_mut(&join(prefix, "out"), f);
    }

    fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> AttentionParams<U> {
        AttentionParams {
            qkv: self.qkv.map(f),
            out: self.out.map(f),
        }
    }
}

/// Pre-norm transformer block: `x + MHA(LN(x))`, then `+ MLP(LN(·))`.
#[derive(Debug, Clone)]
pub struct BlockParams<T> {
    pub ln_attn: LayerNormParams<T>,
    pub attn: AttentionParams<T>,
    pub ln_mlp: LayerNormParams<T>,
    pub fc: LinearParams<T>,
    pub proj: LinearParams<T>,
}

impl BlockParams<Tensor> {
    /// Weights ~ truncated normal with std `fan_in^-1/2`; residual-branch
    /// output projections are further scaled by `(2·depth)^-1/2`.
    pub fn init(width: usize, depth: usize, rng: &mut Rng) -> Self {
        let std = (width as f64).powf(-0.5);
        let resid = std * (2.0 * depth.max(1) as f64).powf(-0.5);
        let hidden = width * MLP_RATIO;
        Self {
            ln_attn: LayerNormParams::init(width),
            attn: AttentionParams {
                qkv: LinearParams::init(3 * width, width, true, std, rng),
                out: LinearParams::init(width, width, true, resid, rng),
            },
            ln_mlp: LayerNormParams::init(width),
            fc: LinearParams::init(hidden, width, true, std, rng),
            proj: LinearParams::init(width, hidden, true, resid * (MLP_RATIO as f64).powf(-0.5), rng),
        }
    }
}

impl<T> ParamTree<T> for BlockParams<T> {
    type Mapped<U> = BlockParams<U>;

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        self.ln_attn.visit(&join(prefix, "ln_attn"), f);
        self.attn.visit(&join(prefix, "attn"), f);
        self.ln_mlp.visit(&join(prefix, "ln_mlp"), f);
        self.fc.visit(&join(prefix, "mlp.fc"), f);
        self.proj.visit(&join(prefix, "mlp.proj"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        self.ln_attn.visit_mut(&join(prefix, "ln_attn"), f);
        self.attn.visit_mut(&join(prefix, "attn"), f);
        self.ln_mlp.visit_mut(&join(prefix, "ln_mlp"), f);
        self.fc.visit_mut(&join(prefix, "mlp.fc"), f);
        self.proj.visit_mut(&join(prefix, "mlp.proj"), f);
    }

    fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> BlockParams<U> {
        BlockParams {
            ln_attn: self.ln_attn.map(f),
            attn: self.attn.map(f),
            ln_mlp: self.ln_mlp.map(f),
            fc: self.fc.map(f),
            proj: self.proj.map(f),
        }
    }
}

pub fn linear(g: &mut Graph, x: Var, p: &LinearParams<Var>) -> Result<Var> {
    g.linear(x, p.weight, p.bias)
}

pub fn layer_norm(g: &mut Graph, x: Var, p: &LayerNormParams<Var>) -> Result<Var> {
    g.layer_norm(x, p.gamma, p.beta, LAYER_NORM_EPS)
}

/// Multi-head scaled dot-product self-attention over the rows of `x: [n, w]`.
pub fn multi_head_attention(
    g: &mut Graph,
    x: Var,
    p: &AttentionParams<Var>,
    heads: usize,
    causal: bool,
) -> Result<Var> {
    let w = g.value(x).cols();
    if heads == 0 || w % heads != 0 {
        return Err(Error::Config(format!("width {w} is not divisible by {heads} heads")));
    }
    let qkv = linear(g, x, &p.qkv)?;
    let ctx = g.attention(qkv, heads, causal)?;
    linear(g, ctx, &p.out)
}

pub fn transformer_block(
    g: &mut Graph,
    x: Var,
    p: &BlockParams<Var>,
    heads: usize,
    causal: bool,
) -> Result<Var> {
    let h = layer_norm(g, x, &p.ln_attn)?;
    let h = multi_head_attention(g, h, &p.attn, heads, causal)?;
    let x = g.add(x, h)?;
    let h = layer_norm(g, x, &p.ln_mlp)?;
    let h = linear(g, h, &p.fc)?;
    let h = g.quick_gelu(h)?;
    let h = linear(g, h, &p.proj)?;
    g.add(x, h)
}

/// `softmax(x / temperature)`, computed with max subtraction.
pub fn softmax(x: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::Parameter(format!("temperature must be positive, got {temperature}")));
    }
    if x.is_empty() {
        return Err(Error::Input("softmax of an empty vector".into()));
    }
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("cosine_similarity", format!("{} vs {}", a.len(), b.len())));
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}
