//! Finite-difference checks for every op kind on the tape, plus composite
//! layers and the full network.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grad_check, GradCheckOptions, GradCheckReport};
use crate::attn::{gated_qk_project, integ_attn, AttnOptions, AttnWeights, RopeTable};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var, OP_KINDS};
use crate::model::block::{integssm_block_forward, AttnCtx, BlockParams};
use crate::model::layers::mlp;
use crate::model::{Model, ModelConfig, ModelParams, PromptTokens, SsmMode};
use crate::ops::activation::Activation;
use crate::ops::loss::pos_weight_for;
use crate::param::{ParamSource, ParamSpec};
use crate::ssm::SsmVars;
use crate::taxonomy::{Modality, Task};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    pub eps: f64,
    pub tol: f64,
    /// Random shapes tried per op.
    pub shapes_per_op: usize,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tol: 1e-4,
            shapes_per_op: 5,
            seed: 7,
        }
    }
}

/// Worst result over all shapes tried for one op.
#[derive(Clone, Debug)]
pub struct OpCheck {
    pub name: String,
    pub report: GradCheckReport,
}

fn dims(rng: &mut ChaCha8Rng, rank: usize, lo: usize, hi: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.random_range(lo..=hi)).collect()
}

fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::uniform(shape.to_vec(), -1.0, 1.0, rng).expect("valid shape")
}

/// Uniform values with magnitude at least 0.05, away from activation kinks.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.random_range(0.05..1.5);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
    .expect("valid shape")
}

fn merge(worst: Option<GradCheckReport>, next: GradCheckReport) -> GradCheckReport {
    match worst {
        Some(w) if !(next.max_rel_err > w.max_rel_err || (next.failure.is_some() && w.failure.is_none())) => w,
        _ => next,
    }
}

type Case = (Vec<Tensor>, Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>);

fn case_for(op: &str, rng: &mut ChaCha8Rng, trial: usize) -> Result<Case> {
    let case: Case = match op {
        "activation" => {
            let kind = Activation::ALL[trial % Activation::ALL.len()];
            let s = dims(rng, 2, 1, 6);
            (vec![away_from_zero(rng, &s)], Box::new(move |g, v| g.activation(v[0], kind)))
        }
        "softplus" => {
            let s = dims(rng, 2, 1, 6);
            (vec![rand_t(rng, &s)], Box::new(|g, v| g.softplus(v[0])))
        }
        "scale" => {
            let s = dims(rng, 3, 1, 4);
            let f = rng.random_range(-3.0..3.0);
            (vec![rand_t(rng, &s)], Box::new(move |g, v| g.scale(v[0], f)))
        }
        "binary" => {
            let s = dims(rng, 3, 1, 4);
            let mut t = s.clone();
            t[trial % 3] = 1;
            let (a, b) = (rand_t(rng, &s), rand_t(rng, &t));
            (
                vec![a, b],
                Box::new(move |g, v| {
                    let x = g.mul(v[0], v[1])?;
                    let y = g.add(x, v[1])?;
                    g.sub(y, v[0])
                }),
            )
        }
        "expand" => {
            let mut s = dims(rng, 3, 2, 4);
            let target = s.clone();
            s[trial % 3] = 1;
            (vec![rand_t(rng, &s)], Box::new(move |g, v| g.expand(v[0], &target)))
        }
        "matmul" => {
            let (m, k, n) = (rng.random_range(1..=5), rng.random_range(1..=5), rng.random_range(1..=5));
            let batch = rng.random_range(1..=3);
            let a = rand_t(rng, &[batch, m, k]);
            let b = if trial % 2 == 0 { rand_t(rng, &[k, n]) } else { rand_t(rng, &[batch, k, n]) };
            (vec![a, b], Box::new(|g, v| g.matmul(v[0], v[1])))
        }
        "conv2d" => {
            let cin = rng.random_range(1..=3);
            let cout = rng.random_range(1..=3);
            let k = if trial % 2 == 0 { 3 } else { 1 };
            let stride = 1 + trial % 2;
            let h = rng.random_range(3..=7);
            let w = rng.random_range(3..=7);
            let x = rand_t(rng, &[2, cin, h, w]);
            let wt = rand_t(rng, &[cout, cin, k, k]);
            let b = rand_t(rng, &[cout]);
            (vec![x, wt, b], Box::new(move |g, v| g.conv2d(v[0], v[1], Some(v[2]), stride, k / 2)))
        }
        "depthwise_conv2d" => {
            let c = rng.random_range(1..=4);
            let (h, w) = (rng.random_range(1..=6), rng.random_range(1..=6));
            let x = rand_t(rng, &[2, c, h, w]);
            let wt = rand_t(rng, &[c, 1, 3, 3]);
            let b = rand_t(rng, &[c]);
            (vec![x, wt, b], Box::new(|g, v| g.depthwise_conv2d(v[0], v[1], Some(v[2]))))
        }
        "layer_norm" => {
            let d = rng.random_range(2..=8);
            let s = vec![rng.random_range(1..=3), rng.random_range(1..=3), d];
            let x = rand_t(rng, &s);
            let gamma = rand_t(rng, &[d]);
            let beta = rand_t(rng, &[d]);
            (vec![x, gamma, beta], Box::new(|g, v| g.layer_norm(v[0], v[1], v[2], 1e-5)))
        }
        "reshape" => {
            let s = dims(rng, 3, 1, 4);
            let flat = vec![s[0] * s[1], s[2]];
            (
                vec![rand_t(rng, &s)],
                Box::new(move |g, v| {
                    let y = g.reshape(v[0], &flat)?;
                    g.mul(y, y)
                }),
            )
        }
        "permute" => {
            let s = dims(rng, 4, 1, 3);
            let perms = [[0, 3, 1, 2], [0, 2, 3, 1], [3, 2, 1, 0], [1, 0, 3, 2], [2, 0, 1, 3]];
            let p = perms[trial % perms.len()];
            (vec![rand_t(rng, &s)], Box::new(move |g, v| g.permute(v[0], &p)))
        }
        "concat" => {
            let axis = trial % 3;
            let s = dims(rng, 3, 1, 3);
            let mut t = s.clone();
            t[axis] = rng.random_range(1..=3);
            (vec![rand_t(rng, &s), rand_t(rng, &t)], Box::new(move |g, v| g.concat(&[v[0], v[1]], axis)))
        }
        "slice" => {
            let s = dims(rng, 3, 2, 5);
            let axis = trial % 3;
            let start = rng.random_range(0..s[axis] - 1);
            let len = rng.random_range(1..=s[axis] - start);
            (vec![rand_t(rng, &s)], Box::new(move |g, v| g.slice(v[0], axis, start, len)))
        }
        "reduce" => {
            let s = dims(rng, 3, 1, 4);
            let mode = trial % 4;
            (
                vec![rand_t(rng, &s)],
                Box::new(move |g, v| match mode {
                    0 => g.sum(v[0]),
                    1 => g.mean(v[0]),
                    2 => g.sum_axis(v[0], 1),
                    _ => g.mean_axis(v[0], 2),
                }),
            )
        }
        "upsample_bilinear" => {
            let s = vec![1, rng.random_range(1..=2), rng.random_range(1..=4), rng.random_range(1..=4)];
            let scale = 1 + trial % 4;
            (vec![rand_t(rng, &s)], Box::new(move |g, v| g.upsample_bilinear(v[0], scale)))
        }
        "embedding" => {
            let vocab = rng.random_range(2..=6);
            let d = rng.random_range(1..=4);
            let ids: Vec<usize> = (0..6).map(|_| rng.random_range(0..vocab)).collect();
            (vec![rand_t(rng, &[vocab, d])], Box::new(move |g, v| g.embedding(v[0], &ids, &[2, 3])))
        }
        "rope" => {
            let d = 2 * rng.random_range(1..=4);
            let n = rng.random_range(1..=6);
            let table = RopeTable::new(8, d)?;
            (vec![rand_t(rng, &[2, n, d])], Box::new(move |g, v| g.rope(v[0], &table)))
        }
        "ssm_scan" => {
            let d = rng.random_range(1..=3);
            let l = rng.random_range(1..=6);
            let reverse = trial % 2 == 1;
            let a = Tensor::from_fn([d], |_| -rng.random_range(0.1..2.0))?;
            let delta = Tensor::from_fn([d], |_| rng.random_range(0.1..1.0))?;
            let mut a_data = a.into_data();
            if trial == 2 {
                // Exercise the a -> 0 limit branch.
                a_data[0] = 0.0;
            }
            let a = Tensor::new([d], a_data)?;
            let inputs = vec![rand_t(rng, &[2, l, d]), a, rand_t(rng, &[d]), rand_t(rng, &[d]), rand_t(rng, &[d]), delta];
            (
                inputs,
                Box::new(move |g, v| {
                    let p = SsmVars {
                        a: v[1],
                        b: v[2],
                        c: v[3],
                        d_res: v[4],
                        delta: v[5],
                    };
                    g.ssm_scan(v[0], p, reverse)
                }),
            )
        }
        "bce_with_logits" => {
            let s = dims(rng, 2, 1, 6);
            let target = Tensor::from_fn(s.clone(), |_| if rng.random_bool(0.3) { 1.0 } else { 0.0 })?;
            let w = pos_weight_for(target.data());
            let z = Tensor::uniform(s, -4.0, 4.0, rng)?;
            (vec![z], Box::new(move |g, v| g.bce_with_logits(v[0], &target, w)))
        }
        "mlp" => {
            let d = rng.random_range(1..=4);
            let x = rand_t(rng, &[2, 3, d]);
            let inputs = vec![x, rand_t(rng, &[d, 4 * d]), rand_t(rng, &[4 * d]), rand_t(rng, &[4 * d, d]), rand_t(rng, &[d])];
            (inputs, Box::new(|g, v| mlp(g, v[0], v[1], v[2], v[3], v[4])))
        }
        "gated_qk_project" => {
            let d = rng.random_range(1..=4);
            let (inputs, _) = attn_inputs(rng, d, 3, false)?;
            (
                inputs,
                Box::new(|g, v| {
                    let w = attn_from(&v[1..], false);
                    let (q, k, val) = gated_qk_project(g, v[0], &w)?;
                    let qk = g.mul(q, k)?;
                    g.concat(&[qk, val], 2)
                }),
            )
        }
        "integ_attn" => {
            let d = 2 * rng.random_range(1..=2);
            let (h, w) = (rng.random_range(1..=3), rng.random_range(1..=3));
            let (inputs, _) = attn_inputs(rng, d, h * w, true)?;
            let table = RopeTable::new(16, d)?;
            let gate = if trial % 2 == 0 { crate::attn::GateKind::Channel } else { crate::attn::GateKind::Scalar };
            (
                inputs,
                Box::new(move |g, v| {
                    let wts = attn_from(&v[1..], true);
                    integ_attn(g, v[0], &wts, &table, (h, w), AttnOptions { use_rope: true, gate })
                }),
            )
        }
        other => return Err(Error::InvalidArgument(format!("no gradient case for op `{other}`"))),
    };
    Ok(case)
}

fn attn_inputs(rng: &mut ChaCha8Rng, d: usize, n: usize, depthwise: bool) -> Result<(Vec<Tensor>, usize)> {
    let mut inputs = vec![rand_t(rng, &[2, n, d])];
    let mut src = |spec: ParamSpec| -> Result<()> {
        inputs.push(rand_t(rng, &spec.shape));
        Ok(())
    };
    AttnWeights::<()>::declare(d, depthwise, &mut src)?;
    let count = inputs.len() - 1;
    Ok((inputs, count))
}

/// Rebuilds attention handles in declaration order.
fn attn_from(vars: &[Var], depthwise: bool) -> AttnWeights<Var> {
    let mut it = vars.iter().copied();
    let mut next = |_: ParamSpec| -> Result<Var> { Ok(it.next().expect("enough handles")) };
    AttnWeights::declare(0, depthwise, &mut next).expect("infallible")
}

/// Names reported by [`op_suite`]: every tape op kind, then composite layers.
pub const COMPOSITES: &[&str] = &["mlp", "gated_qk_project", "integ_attn", "integssm_block(attn)", "integssm_block(scan)"];

fn block_case(rng: &mut ChaCha8Rng, mode: SsmMode) -> Result<Case> {
    let d = 4;
    let grid = (2, 3);
    let mut inputs = vec![rand_t(rng, &[1, 6, d])];
    let mut src = |spec: ParamSpec| -> Result<()> {
        let t = spec.init.sample(&spec.shape, rng)?;
        // Perturb constant initial values so every path carries signal.
        let t = Tensor::from_fn(spec.shape.clone(), |i| t.data()[i] + 0.1 * ((i * 7 + 3) as f64).sin())?;
        inputs.push(t);
        Ok(())
    };
    BlockParams::<()>::declare("b", d, mode, true, &mut src)?;
    let table = RopeTable::new(8, d)?;
    Ok((
        inputs,
        Box::new(move |g, v| {
            let mut it = v[1..].iter().copied();
            let mut next = |_: ParamSpec| -> Result<Var> { Ok(it.next().expect("enough handles")) };
            let p = BlockParams::declare("b", d, mode, true, &mut next)?;
            let ctx = AttnCtx {
                rope: &table,
                opts: AttnOptions::default(),
            };
            integssm_block_forward(g, v[0], &p, grid, ctx)
        }),
    ))
}

/// Runs the per-op checks: each tape op kind exactly once, then composites.
pub fn op_suite(opts: &SuiteOptions) -> Result<Vec<OpCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let gc = GradCheckOptions {
        eps: opts.eps,
        tol: opts.tol,
        max_elements_per_input: Some(64),
        seed: opts.seed,
    };
    let mut out = Vec::new();
    for name in OP_KINDS.iter().chain(COMPOSITES) {
        let mut worst = None;
        let trials = if name.starts_with("integssm_block") { 1 } else { opts.shapes_per_op };
        for trial in 0..trials {
            let (inputs, f) = match *name {
                "integssm_block(attn)" => block_case(&mut rng, SsmMode::Attn)?,
                "integssm_block(scan)" => block_case(&mut rng, SsmMode::Scan)?,
                _ => case_for(name, &mut rng, trial)?,
            };
            let rep = grad_check(|g, v| f(g, v), &inputs, &gc)?;
            worst = Some(merge(worst, rep));
        }
        let mut report = worst.expect("at least one trial");
        report.passed = report.failure.is_none() && report.max_rel_err < opts.tol;
        out.push(OpCheck {
            name: name.to_string(),
            report,
        });
    }
    Ok(out)
}

/// End-to-end check of forward + weighted BCE on a `1×c×h×w` input, with a
/// random subset of elements of every parameter.
pub fn model_check(cfg: &ModelConfig, seed: u64, elements_per_param: usize, opts: &SuiteOptions) -> Result<GradCheckReport> {
    let model = Model::new(cfg.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let image = Tensor::uniform(vec![1, cfg.in_channels, cfg.input_h, cfg.input_w], 0.0, 1.0, &mut rng)?;
    let mask = Tensor::from_fn(vec![1, 1, cfg.input_h, cfg.input_w], |i| {
        let (y, x) = (i / cfg.input_w, i % cfg.input_w);
        if y < cfg.input_h / 2 && x < cfg.input_w / 3 {
            1.0
        } else {
            0.0
        }
    })?;
    let w = pos_weight_for(mask.data());
    let prompts = vec![PromptTokens::new(Modality::Microscopy, Task::Idd, cfg.vocab_size, cfg.prompt_len)?];

    let names: Vec<String> = model.params().keys().cloned().collect();
    let mut inputs: Vec<Tensor> = model.params().values().cloned().collect();
    inputs.push(image);
    let index: BTreeMap<String, usize> = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    let f = |g: &mut Graph, v: &[Var]| -> Result<Var> {
        let mut lookup = |spec: ParamSpec| -> Result<Var> { Ok(v[index[&spec.name]]) };
        let p = ModelParams::declare(model.config(), &mut lookup as &mut dyn ParamSource<Var>)?;
        let logits = model.forward(g, &p, v[v.len() - 1], &prompts)?;
        g.bce_with_logits(logits, &mask, w)
    };
    let gc = GradCheckOptions {
        eps: opts.eps,
        tol: opts.tol,
        max_elements_per_input: Some(elements_per_param),
        seed,
    };
    grad_check(f, &inputs, &gc)
}
