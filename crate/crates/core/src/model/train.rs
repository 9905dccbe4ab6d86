//! Weighted-BCE training with Adam.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::graph::Graph;
use crate::model::network::Model;
use crate::ops::loss::pos_weight_for;
use crate::taxonomy::{Modality, Task};
use crate::tensor::Tensor;

/// One training example: image `[c, h, w]` in `[0, 1]` and binary mask `[1, h, w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub mask: Tensor,
    pub modality: Modality,
    pub task: Task,
}

/// Stacks samples into `[b, c, h, w]` images and `[b, 1, h, w]` masks.
pub fn stack(batch: &[&Sample]) -> Result<(Tensor, Tensor, Vec<(Modality, Task)>)> {
    let first = batch.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let is = first.image.shape().to_vec();
    if is.len() != 3 {
        return Err(shape_err("stack", format!("image must be [c, h, w], got {is:?}")));
    }
    let ms = vec![1, is[1], is[2]];
    let mut images = Vec::with_capacity(batch.len() * first.image.numel());
    let mut masks = Vec::with_capacity(batch.len() * is[1] * is[2]);
    let mut keys = Vec::with_capacity(batch.len());
    for s in batch {
        if s.image.shape() != is.as_slice() || s.mask.shape() != ms.as_slice() {
            return Err(shape_err(
                "stack",
                format!("sample image {:?} / mask {:?} vs {is:?} / {ms:?}", s.image.shape(), s.mask.shape()),
            ));
        }
        if s.mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument("masks must be binary {0, 1}".into()));
        }
        images.extend_from_slice(s.image.data());
        masks.extend_from_slice(s.mask.data());
        keys.push((s.modality, s.task));
    }
    let b = batch.len();
    Ok((
        Tensor::new(vec![b, is[0], is[1], is[2]], images)?,
        Tensor::new(vec![b, 1, is[1], is[2]], masks)?,
        keys,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl Adam {
    /// Applies one bias-corrected update.
    pub fn update(&mut self, params: &mut BTreeMap<String, Tensor>, grads: &BTreeMap<String, Vec<f64>>) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let n = p.numel();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mh = *mi / c1;
                let vh = *vi / c2;
                *w -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

fn non_finite_loss(g: &Graph) -> Error {
    match g.first_non_finite() {
        Some((node, op)) => Error::NonFinite { op, node },
        None => Error::NonFinite {
            op: "bce_with_logits",
            node: g.len().saturating_sub(1),
        },
    }
}

/// Loss of the current parameters on one batch, without updating.
pub fn batch_loss(model: &Model, batch: &[&Sample]) -> Result<f64> {
    let (images, masks, keys) = stack(batch)?;
    let prompts = model.prompts(&keys)?;
    let mut g = Graph::new();
    let (p, _) = model.bind(&mut g, false)?;
    let x = g.constant(images);
    let logits = model.forward(&mut g, &p, x, &prompts)?;
    let loss = g.bce_with_logits(logits, &masks, pos_weight_for(masks.data()))?;
    let l = g.value(loss).item()?;
    if !l.is_finite() {
        return Err(non_finite_loss(&g));
    }
    Ok(l)
}

/// One forward/backward pass and Adam update; returns the loss before the update.
pub fn train_step(model: &mut Model, opt: &mut Adam, batch: &[&Sample]) -> Result<f64> {
    let (images, masks, keys) = stack(batch)?;
    let prompts = model.prompts(&keys)?;
    let mut g = Graph::new();
    let (p, names) = model.bind(&mut g, true)?;
    let x = g.constant(images);
    let logits = model.forward(&mut g, &p, x, &prompts)?;
    let loss = g.bce_with_logits(logits, &masks, pos_weight_for(masks.data()))?;
    let l = g.value(loss).item()?;
    if !l.is_finite() {
        return Err(non_finite_loss(&g));
    }
    g.backward(loss)?;
    let mut grads = BTreeMap::new();
    for (name, v) in names {
        let grad = match g.grad(v) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; g.value(v).numel()],
        };
        grads.insert(name, grad);
    }
    drop(g);
    opt.update(model.params_mut(), &grads);
    Ok(l)
}

/// Mean loss over consecutive batches of `samples`, weighted by batch size.
pub fn dataset_loss(model: &Model, samples: &[Sample], batch_size: usize) -> Result<f64> {
    if samples.is_empty() || batch_size == 0 {
        return Err(Error::InvalidArgument("dataset_loss needs samples and a positive batch size".into()));
    }
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        total += batch_loss(model, &refs)? * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean of the per-step losses during the epoch.
    pub train_loss: f64,
}

/// Runs `epochs` shuffled passes over `samples`, calling `on_epoch` after each.
pub fn fit(
    model: &mut Model,
    opt: &mut Adam,
    samples: &[Sample],
    opts: &FitOptions,
    mut on_epoch: impl FnMut(&EpochStats, &Model) -> Result<()>,
) -> Result<Vec<EpochStats>> {
    if samples.is_empty() || opts.batch_size == 0 {
        return Err(Error::InvalidArgument("fit needs samples and a positive batch size".into()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(opts.epochs);
    let first_epoch = opt.step as usize / samples.len().div_ceil(opts.batch_size);
    for e in 0..opts.epochs {
        let epoch = first_epoch + e;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut steps = 0;
        for idx in order.chunks(opts.batch_size) {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &samples[i]).collect();
            sum += train_step(model, opt, &batch)?;
            steps += 1;
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss: sum / steps as f64,
        };
        on_epoch(&stats, model)?;
        history.push(stats);
    }
    Ok(history)
}
