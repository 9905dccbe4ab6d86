//! End-to-end network: stem and encoder, prompt embedding, prompt boosting,
//! fusion and mask decoding.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attn::{cross_attn, grid_to_tokens, tokens_to_grid, AttnOptions, AttnWeights, RopeTable};
use crate::error::{shape_err, Error, Result};
use crate::graph::{Graph, Var};
use crate::model::block::{integssm_block_forward, AttnCtx, BlockParams};
use crate::model::config::ModelConfig;
use crate::model::layers::{Conv, LayerNorm, Linear, Mlp};
use crate::model::prompt::PromptTokens;
use crate::param::{Init, ParamSource, ParamSpec, Scoped};
use crate::taxonomy::{Modality, Task};
use crate::tensor::Tensor;

/// Standard deviation of the initial prompt embeddings.
pub const EMBED_INIT_STD: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct BoostParams<T> {
    pub cross: AttnWeights<T>,
    pub block: BlockParams<T>,
    pub mlp: Mlp<T>,
    pub readout: AttnWeights<T>,
    pub global: Linear<T>,
}

#[derive(Clone, Debug)]
pub struct FusionParams<T> {
    pub proj_v: Linear<T>,
    pub proj_t: Linear<T>,
    pub conv_v: Conv<T>,
    pub conv_t: Conv<T>,
    pub block: BlockParams<T>,
    pub ln: LayerNorm<T>,
    pub out: Linear<T>,
}

#[derive(Clone, Debug)]
pub struct DecoderParams<T> {
    pub conv: Conv<T>,
    pub head: Conv<T>,
}

/// Every parameter of the network, as tensors or as tape handles.
#[derive(Clone, Debug)]
pub struct ModelParams<T> {
    pub stem1: Conv<T>,
    pub stem2: Conv<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub embedding: T,
    pub boost: BoostParams<T>,
    pub fusion: FusionParams<T>,
    pub decoder: DecoderParams<T>,
}

impl<T> ModelParams<T> {
    /// Declares all parameters in a fixed order.
    pub fn declare(cfg: &ModelConfig, src: &mut dyn ParamSource<T>) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let (mode, dw) = (cfg.ssm_mode, cfg.depthwise);
        let stem1 = Conv::declare("stem.conv1", cfg.in_channels, d / 2, 3, src)?;
        let stem2 = Conv::declare("stem.conv2", d / 2, d, 3, src)?;
        let blocks = (0..cfg.depth)
            .map(|i| BlockParams::declare(&format!("encoder.block{i}"), d, mode, dw, src))
            .collect::<Result<Vec<_>>>()?;
        let embedding = src.get(ParamSpec::new("prompt.embedding", [cfg.vocab_size, d], Init::Normal(EMBED_INIT_STD)))?;
        let boost = {
            let mut s = Scoped::new("boost", src);
            BoostParams {
                cross: AttnWeights::declare(d, dw, &mut Scoped::new("cross", &mut s))?,
                block: BlockParams::declare("block", d, mode, dw, &mut s)?,
                mlp: Mlp::declare("mlp", d, &mut s)?,
                readout: AttnWeights::declare(d, dw, &mut Scoped::new("readout", &mut s))?,
                global: Linear::declare("global", d, d, &mut s)?,
            }
        };
        let fusion = {
            let mut s = Scoped::new("fusion", src);
            FusionParams {
                proj_v: Linear::declare("proj_v", d, 2 * d, &mut s)?,
                proj_t: Linear::declare("proj_t", 2 * d, 2 * d, &mut s)?,
                conv_v: Conv::declare("conv_v", 2 * d, 2 * d, 3, &mut s)?,
                conv_t: Conv::declare("conv_t", 2 * d, 2 * d, 3, &mut s)?,
                block: BlockParams::declare("block", 2 * d, mode, dw, &mut s)?,
                ln: LayerNorm::declare("ln", 2 * d, &mut s)?,
                out: Linear::declare("out", 2 * d, 2 * d, &mut s)?,
            }
        };
        let decoder = DecoderParams {
            conv: Conv::declare("decoder.conv", 2 * d, d, 3, src)?,
            head: Conv::declare("decoder.head", d, 1, 1, src)?,
        };
        Ok(Self {
            stem1,
            stem2,
            blocks,
            embedding,
            boost,
            fusion,
            decoder,
        })
    }
}

/// Rotary tables and attention options shared by a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCtx {
    pub rope_d: RopeTable,
    pub rope_2d: RopeTable,
    pub opts: AttnOptions,
}

impl ForwardCtx {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let len = cfg.tokens().max(cfg.prompt_len);
        Ok(Self {
            rope_d: RopeTable::new(len, cfg.embed_dim)?,
            rope_2d: RopeTable::new(len, 2 * cfg.embed_dim)?,
            opts: AttnOptions {
                use_rope: cfg.use_rope,
                gate: cfg.gate,
            },
        })
    }

    fn d(&self) -> AttnCtx<'_> {
        AttnCtx { rope: &self.rope_d, opts: self.opts }
    }

    fn d2(&self) -> AttnCtx<'_> {
        AttnCtx { rope: &self.rope_2d, opts: self.opts }
    }
}

/// `[b, c, h, w]` image → `[b, N, D]` visual tokens.
pub fn encode_visual(g: &mut Graph, image: Var, p: &ModelParams<Var>, cfg: &ModelConfig, ctx: &ForwardCtx) -> Result<Var> {
    let s = g.shape(image).to_vec();
    if s.len() != 4 || s[2] % 4 != 0 || s[3] % 4 != 0 {
        return Err(Error::Config(format!("image shape {s:?} must be [b, c, h, w] with h, w divisible by 4")));
    }
    if s[1] != cfg.in_channels {
        return Err(shape_err("encode_visual", format!("{} input channels, model expects {}", s[1], cfg.in_channels)));
    }
    let x = p.stem1.forward(g, image, 2)?;
    let x = g.silu(x)?;
    let x = p.stem2.forward(g, x, 2)?;
    let grid = (s[2] / 4, s[3] / 4);
    let mut t = grid_to_tokens(g, x)?;
    for b in &p.blocks {
        t = integssm_block_forward(g, t, b, grid, ctx.d())?;
    }
    Ok(t)
}

/// Looks up prompt ids: `[b, M, D]`.
pub fn prompt_embed(g: &mut Graph, table: Var, prompts: &[PromptTokens], cfg: &ModelConfig) -> Result<Var> {
    let m = cfg.prompt_len;
    let mut ids = Vec::with_capacity(prompts.len() * m);
    for p in prompts {
        if p.ids.len() != m {
            return Err(shape_err("prompt_embed", format!("prompt has {} ids, expected {m}", p.ids.len())));
        }
        ids.extend_from_slice(&p.ids);
    }
    g.embedding(table, &ids, &[prompts.len(), m])
}

/// Enhances prompts with visual context and reads them out per visual token:
/// `[b, M, D]`, `[b, N, D]` → `[b, N, 2D]`.
pub fn integboost_forward(
    g: &mut Graph,
    prompts: Var,
    visual: Var,
    p: &BoostParams<Var>,
    grid: (usize, usize),
    ctx: &ForwardCtx,
) -> Result<Var> {
    let ps = g.shape(prompts).to_vec();
    let vs = g.shape(visual).to_vec();
    if ps.len() != 3 || vs.len() != 3 || ps[0] != vs[0] || ps[2] != vs[2] || vs[1] != grid.0 * grid.1 {
        return Err(shape_err("integboost", format!("prompts {ps:?} vs visual {vs:?} on grid {grid:?}")));
    }
    let (b, m, d) = (ps[0], ps[1], ps[2]);
    let n = vs[1];
    let prompt_grid = (1, m);

    let c = cross_attn(g, prompts, visual, &p.cross, &ctx.rope_d, Some(prompt_grid), ctx.opts)?;
    let p1 = g.add(prompts, c)?;
    let blk = integssm_block_forward(g, p1, &p.block, prompt_grid, ctx.d())?;
    let p2 = g.add(p1, blk)?;
    let mlp = p.mlp.forward(g, p2)?;
    let p3 = g.add(p2, mlp)?;

    let local = cross_attn(g, visual, p3, &p.readout, &ctx.rope_d, Some(grid), ctx.opts)?;
    let summary = g.mean_axis(p3, 1)?;
    let summary = p.global.forward(g, summary)?;
    let global = g.expand(summary, &[b, n, d])?;
    g.concat(&[local, global], 2)
}

/// Fuses visual `[b, N, D]` and text `[b, N, 2D]` streams into `[b, N, 2D]`.
pub fn integration_fuse(
    g: &mut Graph,
    visual: Var,
    text: Var,
    p: &FusionParams<Var>,
    grid: (usize, usize),
    ctx: &ForwardCtx,
) -> Result<Var> {
    let (vs, ts) = (g.shape(visual).to_vec(), g.shape(text).to_vec());
    if vs.len() != 3 || ts.len() != 3 || vs[..2] != ts[..2] || ts[2] != 2 * vs[2] {
        return Err(shape_err("integration_fuse", format!("visual {vs:?} vs text {ts:?}")));
    }
    let v = p.proj_v.forward(g, visual)?;
    let v = tokens_to_grid(g, v, grid)?;
    let v = p.conv_v.forward(g, v, 1)?;
    let v = g.silu(v)?;
    let t = p.proj_t.forward(g, text)?;
    let t = tokens_to_grid(g, t, grid)?;
    let t = p.conv_t.forward(g, t, 1)?;
    let t = g.silu(t)?;
    let sum = g.add(v, t)?;
    let x = grid_to_tokens(g, sum)?;
    let x = integssm_block_forward(g, x, &p.block, grid, ctx.d2())?;
    let x = p.ln.forward(g, x)?;
    p.out.forward(g, x)
}

/// `[b, N, 2D]` → mask logits `[b, 1, 4·H_f, 4·W_f]`.
pub fn decode_mask(g: &mut Graph, fused: Var, p: &DecoderParams<Var>, grid: (usize, usize)) -> Result<Var> {
    let x = tokens_to_grid(g, fused, grid)?;
    let x = p.conv.forward(g, x, 1)?;
    let x = g.relu(x)?;
    let x = p.head.forward(g, x, 1)?;
    g.upsample_bilinear(x, 4)
}

/// Full forward pass returning mask logits `[b, 1, h, w]`.
pub fn model_forward(
    g: &mut Graph,
    images: Var,
    prompts: &[PromptTokens],
    p: &ModelParams<Var>,
    cfg: &ModelConfig,
    ctx: &ForwardCtx,
) -> Result<Var> {
    let s = g.shape(images).to_vec();
    if s.len() != 4 || s[0] != prompts.len() {
        return Err(shape_err("model_forward", format!("images {s:?} with {} prompts", prompts.len())));
    }
    let grid = (s[2] / 4, s[3] / 4);
    let visual = encode_visual(g, images, p, cfg, ctx)?;
    let text = prompt_embed(g, p.embedding, prompts, cfg)?;
    let text = integboost_forward(g, text, visual, &p.boost, grid, ctx)?;
    let fused = integration_fuse(g, visual, text, &p.fusion, grid, ctx)?;
    decode_mask(g, fused, &p.decoder, grid)
}

/// Thresholded model output.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPrediction {
    pub probabilities: Tensor,
    pub logits: Tensor,
    pub threshold: f64,
}

impl MaskPrediction {
    pub const DEFAULT_THRESHOLD: f64 = 0.5;

    /// Binary mask, `probability >= threshold` counts as positive.
    pub fn binary(&self) -> Vec<bool> {
        self.probabilities.data().iter().map(|&p| p >= self.threshold).collect()
    }
}

/// A configured network with its named parameter tensors.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: BTreeMap<String, Tensor>,
    ctx: ForwardCtx,
}

impl Model {
    /// Initializes parameters from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        let mut src = |spec: ParamSpec| -> Result<()> {
            let t = spec.init.sample(&spec.shape, &mut rng)?;
            if params.insert(spec.name.clone(), t).is_some() {
                return Err(Error::Config(format!("duplicate parameter name `{}`", spec.name)));
            }
            Ok(())
        };
        ModelParams::declare(&config, &mut src)?;
        let ctx = ForwardCtx::new(&config)?;
        Ok(Self { config, params, ctx })
    }

    /// Wraps stored tensors, checking names and shapes against the config.
    pub fn from_params(config: ModelConfig, params: BTreeMap<String, Tensor>) -> Result<Self> {
        let specs = Self::param_specs(&config)?;
        if specs.len() != params.len() {
            return Err(Error::Config(format!("expected {} parameter tensors, found {}", specs.len(), params.len())));
        }
        for s in &specs {
            let t = params
                .get(&s.name)
                .ok_or_else(|| Error::Config(format!("missing parameter `{}`", s.name)))?;
            if t.shape() != s.shape.as_slice() {
                return Err(shape_err("model", format!("parameter `{}` has shape {:?}, config expects {:?}", s.name, t.shape(), s.shape)));
            }
        }
        let ctx = ForwardCtx::new(&config)?;
        Ok(Self { config, params, ctx })
    }

    /// Declared parameters in declaration order.
    pub fn param_specs(config: &ModelConfig) -> Result<Vec<ParamSpec>> {
        let mut specs = Vec::new();
        let mut src = |spec: ParamSpec| -> Result<()> {
            specs.push(spec);
            Ok(())
        };
        ModelParams::declare(config, &mut src)?;
        Ok(specs)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.params
    }

    pub fn ctx(&self) -> &ForwardCtx {
        &self.ctx
    }

    pub fn num_parameters(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Records every parameter on `g` (trainable or constant) and returns the
    /// structured handles plus the name of each handle.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Result<(ModelParams<Var>, Vec<(String, Var)>)> {
        let mut names = Vec::with_capacity(self.params.len());
        let mut src = |spec: ParamSpec| -> Result<Var> {
            let t = self
                .params
                .get(&spec.name)
                .ok_or_else(|| Error::Config(format!("missing parameter `{}`", spec.name)))?;
            let v = g.leaf(t.clone(), trainable);
            names.push((spec.name, v));
            Ok(v)
        };
        let p = ModelParams::declare(&self.config, &mut src)?;
        Ok((p, names))
    }

    /// Logits for `images: [b, c, h, w]` with one prompt per image.
    pub fn forward(&self, g: &mut Graph, p: &ModelParams<Var>, images: Var, prompts: &[PromptTokens]) -> Result<Var> {
        model_forward(g, images, prompts, p, &self.config, &self.ctx)
    }

    pub fn prompts(&self, keys: &[(Modality, Task)]) -> Result<Vec<PromptTokens>> {
        keys.iter()
            .map(|&(m, t)| PromptTokens::new(m, t, self.config.vocab_size, self.config.prompt_len))
            .collect()
    }

    /// Inference with frozen parameters.
    pub fn predict(&self, images: &Tensor, keys: &[(Modality, Task)]) -> Result<MaskPrediction> {
        let s = images.shape();
        if s.len() != 4 || s[2] != self.config.input_h || s[3] != self.config.input_w {
            return Err(shape_err(
                "predict",
                format!("images {s:?} do not match configured input {}x{}", self.config.input_h, self.config.input_w),
            ));
        }
        let prompts = self.prompts(keys)?;
        let mut g = Graph::new();
        let (p, _) = self.bind(&mut g, false)?;
        let x = g.constant(images.clone());
        let logits = self.forward(&mut g, &p, x, &prompts)?;
        let probs = g.sigmoid(logits)?;
        Ok(MaskPrediction {
            probabilities: g.value(probs).clone(),
            logits: g.value(logits).clone(),
            threshold: MaskPrediction::DEFAULT_THRESHOLD,
        })
    }
}
