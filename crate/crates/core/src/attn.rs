//! Rotary positional encoding and linear-cost gated attention.
//!
//! Queries and keys pass through `ELU + 1` so they are strictly positive.
//! Keys are compressed to their mean over tokens, which gates the values
//! per token without ever forming a token-by-token matrix.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::graph::{Graph, Op, Var};
use crate::ops::activation::Activation;
use crate::param::{Init, ParamSource, ParamSpec};
use crate::tensor::Tensor;

pub const ROPE_BASE: f64 = 10000.0;

/// Precomputed rotation angles for positions `0..max_len` over `dim` channels.
#[derive(Clone, Debug, PartialEq)]
pub struct RopeTable {
    max_len: usize,
    dim: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl RopeTable {
    pub fn new(max_len: usize, dim: usize) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 {
            return Err(Error::InvalidArgument(format!("rotary dim must be even and positive, got {dim}")));
        }
        let half = dim / 2;
        let mut cos = Vec::with_capacity(max_len * half);
        let mut sin = Vec::with_capacity(max_len * half);
        for p in 0..max_len {
            for i in 0..half {
                let theta = p as f64 * ROPE_BASE.powf(-2.0 * i as f64 / dim as f64);
                cos.push(theta.cos());
                sin.push(theta.sin());
            }
        }
        Ok(Self { max_len, dim, cos, sin })
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Tables for the first `n` positions.
    fn prefix(&self, n: usize, d: usize) -> Result<(&[f64], &[f64])> {
        if d != self.dim {
            return Err(shape_err("rope", format!("table dim {} vs feature dim {d}", self.dim)));
        }
        if n > self.max_len {
            return Err(Error::Capacity(format!("{n} tokens exceed rotary table length {}", self.max_len)));
        }
        let m = n * d / 2;
        Ok((&self.cos[..m], &self.sin[..m]))
    }
}

fn rotate(x: &[f64], shape: &[usize], cos: &[f64], sin: &[f64], inverse: bool) -> Vec<f64> {
    let per_batch = shape[1] * shape[2];
    let s = if inverse { -1.0 } else { 1.0 };
    let mut out = vec![0.0; x.len()];
    for (xb, ob) in x.chunks(per_batch).zip(out.chunks_mut(per_batch)) {
        for (i, (&c, &sn)) in cos.iter().zip(sin).enumerate() {
            let sn = s * sn;
            let (x0, x1) = (xb[2 * i], xb[2 * i + 1]);
            ob[2 * i] = x0 * c - x1 * sn;
            ob[2 * i + 1] = x0 * sn + x1 * c;
        }
    }
    out
}

fn check_tokens(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [b, n, d] => Ok((b, n, d)),
        _ => Err(shape_err(op, format!("expected [batch, tokens, dim], got {shape:?}"))),
    }
}

/// Rotates channel pairs `(2i, 2i+1)` of token `p` by `p·base^(-2i/d)`.
pub fn rope_encode(x: &Tensor, table: &RopeTable) -> Result<Tensor> {
    let (_, n, d) = check_tokens("rope", x.shape())?;
    let (cos, sin) = table.prefix(n, d)?;
    Tensor::new(x.shape().to_vec(), rotate(x.data(), x.shape(), cos, sin, false))
}

pub(crate) fn rope_backward(shape: &[usize], cos: &[f64], sin: &[f64], gout: &[f64]) -> Vec<f64> {
    rotate(gout, shape, cos, sin, true)
}

impl Graph {
    pub fn rope(&mut self, x: Var, table: &RopeTable) -> Result<Var> {
        let t = self.value(x);
        let (_, n, d) = check_tokens("rope", t.shape())?;
        let (cos, sin) = table.prefix(n, d)?;
        let data = rotate(t.data(), t.shape(), cos, sin, false);
        let out = Tensor::new(t.shape().to_vec(), data)?;
        let (cos, sin) = (cos.to_vec(), sin.to_vec());
        self.push(out, Op::Rope { x, cos, sin })
    }
}

/// How queries interact with the compressed key.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    /// Elementwise `q̃ ⊙ k̄ / sqrt(d)`, one gate per channel.
    #[default]
    Channel,
    /// `<q̃, k̄> / sqrt(d)`, one gate per token shared by all channels.
    Scalar,
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateKind::Channel => "channel",
            GateKind::Scalar => "scalar",
        })
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "channel" => Ok(GateKind::Channel),
            "scalar" => Ok(GateKind::Scalar),
            _ => Err(Error::InvalidArgument(format!("unknown gate kind `{s}` (expected channel or scalar)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttnOptions {
    pub use_rope: bool,
    pub gate: GateKind,
}

impl Default for AttnOptions {
    fn default() -> Self {
        Self { use_rope: true, gate: GateKind::Channel }
    }
}

/// Projection weights of one attention layer. `dw_kernel` is the optional
/// depthwise 3×3 residual, shaped `[d, 1, 3, 3]`.
#[derive(Clone, Debug)]
pub struct AttnWeights<T> {
    pub w_q: T,
    pub b_q: T,
    pub w_k: T,
    pub b_k: T,
    pub w_v: T,
    pub b_v: T,
    pub dw_kernel: Option<T>,
    pub dw_bias: Option<T>,
    pub w_out: T,
    pub b_out: T,
}

impl<T> AttnWeights<T> {
    /// Declares the layer's parameters for width `d`.
    pub fn declare(d: usize, depthwise: bool, src: &mut dyn ParamSource<T>) -> Result<Self> {
        let (dw_kernel, dw_bias) = if depthwise {
            (
                Some(src.get(ParamSpec::new("dw_kernel", [d, 1, 3, 3], Init::FanIn(9)))?),
                Some(src.get(ParamSpec::bias("dw_bias", d))?),
            )
        } else {
            (None, None)
        };
        Ok(Self {
            w_q: src.get(ParamSpec::linear_weight("w_q", d, d))?,
            b_q: src.get(ParamSpec::bias("b_q", d))?,
            w_k: src.get(ParamSpec::linear_weight("w_k", d, d))?,
            b_k: src.get(ParamSpec::bias("b_k", d))?,
            w_v: src.get(ParamSpec::linear_weight("w_v", d, d))?,
            b_v: src.get(ParamSpec::bias("b_v", d))?,
            dw_kernel,
            dw_bias,
            w_out: src.get(ParamSpec::linear_weight("w_out", d, d))?,
            b_out: src.get(ParamSpec::bias("b_out", d))?,
        })
    }
}

/// Positive query/key projections and the value projection.
pub fn gated_qk_project(g: &mut Graph, x: Var, w: &AttnWeights<Var>) -> Result<(Var, Var, Var)> {
    let q = g.linear(x, w.w_q, Some(w.b_q))?;
    let q = g.activation(q, Activation::EluPlusOne)?;
    let k = g.linear(x, w.w_k, Some(w.b_k))?;
    let k = g.activation(k, Activation::EluPlusOne)?;
    let v = g.linear(x, w.w_v, Some(w.b_v))?;
    Ok((q, k, v))
}

/// Depthwise 3×3 convolution of tokens `[b, h·w, d]` laid out on an `h×w` grid.
pub fn depthwise_on_grid(g: &mut Graph, tokens: Var, kernel: Var, bias: Option<Var>, grid: (usize, usize)) -> Result<Var> {
    let x = tokens_to_grid(g, tokens, grid)?;
    let y = g.depthwise_conv2d(x, kernel, bias)?;
    grid_to_tokens(g, y)
}

/// `[b, h·w, d]` → `[b, d, h, w]`.
pub fn tokens_to_grid(g: &mut Graph, tokens: Var, grid: (usize, usize)) -> Result<Var> {
    let (b, n, d) = check_tokens("tokens_to_grid", g.shape(tokens))?;
    if n != grid.0 * grid.1 {
        return Err(shape_err("tokens_to_grid", format!("{n} tokens do not fill a {}x{} grid", grid.0, grid.1)));
    }
    let x = g.reshape(tokens, &[b, grid.0, grid.1, d])?;
    g.permute(x, &[0, 3, 1, 2])
}

/// `[b, d, h, w]` → `[b, h·w, d]`.
pub fn grid_to_tokens(g: &mut Graph, x: Var) -> Result<Var> {
    let s = g.shape(x).to_vec();
    if s.len() != 4 {
        return Err(shape_err("grid_to_tokens", format!("expected [b, d, h, w], got {s:?}")));
    }
    let y = g.permute(x, &[0, 2, 3, 1])?;
    g.reshape(y, &[s[0], s[2] * s[3], s[1]])
}

fn gate(g: &mut Graph, q: Var, k_bar: Var, kind: GateKind) -> Result<Var> {
    let d = *g.shape(q).last().expect("rank 3");
    let inv = 1.0 / (d as f64).sqrt();
    let prod = g.mul(q, k_bar)?;
    let s = match kind {
        GateKind::Channel => prod,
        GateKind::Scalar => g.sum_axis(prod, 2)?,
    };
    g.scale(s, inv)
}

fn residual(g: &mut Graph, src: Var, w: &AttnWeights<Var>, grid: Option<(usize, usize)>) -> Result<Option<Var>> {
    match (w.dw_kernel, grid) {
        (Some(k), Some(grid)) => depthwise_on_grid(g, src, k, w.dw_bias, grid).map(Some),
        _ => Ok(None),
    }
}

/// Self attention over `x: [b, N, d]` with `N = h·w`.
///
/// `out = (gate(q̃, k̄) ⊙ v + dwconv(v)) · w_out + b_out` where `k̄` is the mean
/// of the encoded keys. Cost is linear in `N`.
pub fn integ_attn(
    g: &mut Graph,
    x: Var,
    w: &AttnWeights<Var>,
    table: &RopeTable,
    grid: (usize, usize),
    opts: AttnOptions,
) -> Result<Var> {
    let (_, n, _) = check_tokens("integ_attn", g.shape(x))?;
    if n != grid.0 * grid.1 {
        return Err(shape_err("integ_attn", format!("{n} tokens do not fill a {}x{} grid", grid.0, grid.1)));
    }
    let (mut q, mut k, v) = gated_qk_project(g, x, w)?;
    if opts.use_rope {
        q = g.rope(q, table)?;
        k = g.rope(k, table)?;
    }
    let k_bar = g.mean_axis(k, 1)?;
    let gt = gate(g, q, k_bar, opts.gate)?;
    let mut mixed = g.mul(gt, v)?;
    if let Some(r) = residual(g, v, w, Some(grid))? {
        mixed = g.add(mixed, r)?;
    }
    g.linear(mixed, w.w_out, Some(w.b_out))
}

/// Cross attention: queries from `x_q: [b, Nq, d]`, keys and values from
/// `x_kv: [b, Nk, d]`.
///
/// The context `mean_n(k̃_n ⊙ v_n)` is gated per query token by `q̃ / sqrt(d)`.
/// When a query grid is given and the weights carry a depthwise kernel, a
/// depthwise residual of the query tokens is added before the output projection.
pub fn cross_attn(
    g: &mut Graph,
    x_q: Var,
    x_kv: Var,
    w: &AttnWeights<Var>,
    table: &RopeTable,
    query_grid: Option<(usize, usize)>,
    opts: AttnOptions,
) -> Result<Var> {
    let (bq, _, dq) = check_tokens("cross_attn", g.shape(x_q))?;
    let (bk, _, dk) = check_tokens("cross_attn", g.shape(x_kv))?;
    if bq != bk || dq != dk {
        return Err(shape_err("cross_attn", format!("query {:?} vs key/value {:?}", g.shape(x_q), g.shape(x_kv))));
    }
    let q = g.linear(x_q, w.w_q, Some(w.b_q))?;
    let mut q = g.activation(q, Activation::EluPlusOne)?;
    let k = g.linear(x_kv, w.w_k, Some(w.b_k))?;
    let mut k = g.activation(k, Activation::EluPlusOne)?;
    let v = g.linear(x_kv, w.w_v, Some(w.b_v))?;
    if opts.use_rope {
        q = g.rope(q, table)?;
        k = g.rope(k, table)?;
    }
    let kv = g.mul(k, v)?;
    let ctx = g.mean_axis(kv, 1)?;
    let mut mixed = gate(g, q, ctx, opts.gate)?;
    if opts.gate == GateKind::Scalar {
        // A scalar gate needs a value to scale; broadcast the context.
        mixed = g.mul(mixed, ctx)?;
    }
    if let Some(r) = residual(g, x_q, w, query_grid)? {
        mixed = g.add(mixed, r)?;
    }
    g.linear(mixed, w.w_out, Some(w.b_out))
}
