use crate::attn::{integ_attn, AttnOptions, AttnWeights, RopeTable};
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::model::config::SsmMode;
use crate::model::layers::{Conv, LayerNorm, Linear, Mlp};
use crate::param::{ParamSource, Scoped};
use crate::ssm;

/// Token mixer of a block.
#[derive(Clone, Debug)]
pub enum Mixer<T> {
    Attn(AttnWeights<T>),
    /// Forward and reverse scan parameters, each `[a, b, c, d_res, delta_raw]`.
    Scan { fwd: [T; 5], bwd: [T; 5] },
}

/// Parameters of one IntegSSM block of width `d`.
#[derive(Clone, Debug)]
pub struct BlockParams<T> {
    pub conv1: Conv<T>,
    pub ln1: LayerNorm<T>,
    pub conv2: Conv<T>,
    pub ln2: LayerNorm<T>,
    pub mixer: Mixer<T>,
    pub proj1: Linear<T>,
    pub conv3: Conv<T>,
    pub ln3: LayerNorm<T>,
    pub mlp: Mlp<T>,
    pub proj2: Linear<T>,
}

impl<T> BlockParams<T> {
    pub fn declare(name: &str, d: usize, mode: SsmMode, depthwise: bool, src: &mut dyn ParamSource<T>) -> Result<Self> {
        let mut s = Scoped::new(name, src);
        let conv1 = Conv::declare("conv1", d, d, 3, &mut s)?;
        let ln1 = LayerNorm::declare("ln1", d, &mut s)?;
        let conv2 = Conv::declare("conv2", d, d, 3, &mut s)?;
        let ln2 = LayerNorm::declare("ln2", d, &mut s)?;
        let mixer = match mode {
            SsmMode::Attn => Mixer::Attn(AttnWeights::declare(d, depthwise, &mut Scoped::new("attn", &mut s))?),
            SsmMode::Scan => Mixer::Scan {
                fwd: ssm::declare(d, &mut Scoped::new("scan_fwd", &mut s))?,
                bwd: ssm::declare(d, &mut Scoped::new("scan_bwd", &mut s))?,
            },
        };
        Ok(Self {
            conv1,
            ln1,
            conv2,
            ln2,
            mixer,
            proj1: Linear::declare("proj1", d, d, &mut s)?,
            conv3: Conv::declare("conv3", d, d, 3, &mut s)?,
            ln3: LayerNorm::declare("ln3", d, &mut s)?,
            mlp: Mlp::declare("mlp", d, &mut s)?,
            proj2: Linear::declare("proj2", d, d, &mut s)?,
        })
    }
}

/// Shared, non-trainable context for attention layers.
#[derive(Clone, Copy, Debug)]
pub struct AttnCtx<'a> {
    pub rope: &'a RopeTable,
    pub opts: AttnOptions,
}

/// `x: [b, N, d]` on an `h×w` grid with `N = h·w`; shape is preserved.
///
/// conv → LN → conv → LN → SiLU → mixer (+residual) → linear → conv → LN →
/// MLP (+residual) → linear.
pub fn integssm_block_forward(g: &mut Graph, x: Var, p: &BlockParams<Var>, grid: (usize, usize), ctx: AttnCtx<'_>) -> Result<Var> {
    let t = p.conv1.on_tokens(g, x, grid)?;
    let t = p.ln1.forward(g, t)?;
    let t = p.conv2.on_tokens(g, t, grid)?;
    let t = p.ln2.forward(g, t)?;
    let u = g.silu(t)?;
    let mixed = match &p.mixer {
        Mixer::Attn(w) => integ_attn(g, u, w, ctx.rope, grid, ctx.opts)?,
        Mixer::Scan { fwd, bwd } => {
            let f = g.ssm_vars(*fwd)?;
            let b = g.ssm_vars(*bwd)?;
            g.ssm_bidirectional(u, f, b)?
        }
    };
    let u = g.add(u, mixed)?;
    let u = p.proj1.forward(g, u)?;
    let t = p.conv3.on_tokens(g, u, grid)?;
    let w = p.ln3.forward(g, t)?;
    let m = p.mlp.forward(g, w)?;
    let w = g.add(w, m)?;
    p.proj2.forward(g, w)
}
