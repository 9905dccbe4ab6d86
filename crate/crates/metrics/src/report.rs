//! Evaluation report: pooled pixel scores on forged images, image-level MCC
//! over forged and pristine images, broken down by task and modality.

use std::collections::BTreeMap;
use std::path::Path;

use integscan_core::{Modality, Task};
use integscan_imaging::Mask;
use serde::{Deserialize, Serialize};

use crate::confusion::{confusion_counts, mcc, prf_iou, ConfusionCounts};
use crate::error::{Error, Result};
use crate::image_level::predicted_forged;

pub const SCHEMA_VERSION: u32 = 1;
pub const ZERO_DENOMINATOR_RULE: &str = "mcc, precision, recall, f1 and iou are 0 whenever their denominator is 0";

/// The schema the serialized [`Report`] conforms to.
pub const SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelBlock {
    pub mcc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    /// Mean of per-image MCC over forged images (pooled `mcc` is the headline).
    pub mcc_per_image_mean: f64,
    pub counts: ConfusionCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageBlock {
    pub mcc: f64,
    pub counts: ConfusionCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub n_images: usize,
    pub n_pristine: usize,
    pub pixel: PixelBlock,
    pub image: ImageBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub zero_denominator_rule: String,
    pub threshold: f64,
    pub tau: f64,
    pub overall: Block,
    pub per_task: BTreeMap<String, Block>,
    pub per_modality: BTreeMap<String, Block>,
    /// Keyed `"{task}/{modality}"`.
    pub per_task_modality: BTreeMap<String, Block>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut s = self.to_json().map_err(std::io::Error::other)?;
        s.push('\n');
        std::fs::write(path, s)
    }
}

#[derive(Clone, Debug)]
struct Entry {
    task: Task,
    modality: Modality,
    forged: bool,
    called_forged: bool,
    pixel: Option<ConfusionCounts>,
}

#[derive(Clone, Debug)]
pub struct EvalAccumulator {
    threshold: f64,
    tau: f64,
    entries: Vec<Entry>,
}

impl EvalAccumulator {
    pub fn new(threshold: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {tau}")));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidArgument(format!("threshold must lie in [0, 1], got {threshold}")));
        }
        Ok(Self { threshold, tau, entries: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// A forged image with its ground truth; `probabilities` is row-major h×w.
    pub fn add_forged(&mut self, task: Task, modality: Modality, probabilities: &[f64], gt: &Mask) -> Result<()> {
        let pred = Mask::threshold(gt.height(), gt.width(), probabilities, self.threshold)?;
        let counts = confusion_counts(&pred, gt)?;
        let called_forged = predicted_forged(probabilities, self.threshold, self.tau);
        self.entries.push(Entry { task, modality, forged: true, called_forged, pixel: Some(counts) });
        Ok(())
    }

    /// A pristine image; it enters image-level scores only.
    pub fn add_pristine(&mut self, task: Task, modality: Modality, probabilities: &[f64]) {
        let called_forged = predicted_forged(probabilities, self.threshold, self.tau);
        self.entries.push(Entry { task, modality, forged: false, called_forged, pixel: None });
    }

    fn block<'a>(&self, entries: impl Iterator<Item = &'a Entry>) -> Block {
        let mut pixel = ConfusionCounts::default();
        let mut image = ConfusionCounts::default();
        let (mut n, mut n_pristine, mut mcc_sum, mut n_forged) = (0, 0, 0.0, 0usize);
        for e in entries {
            n += 1;
            image.record(e.called_forged, e.forged);
            match &e.pixel {
                Some(c) => {
                    pixel.merge(c);
                    mcc_sum += mcc(c);
                    n_forged += 1;
                }
                None => n_pristine += 1,
            }
        }
        let prf = prf_iou(&pixel);
        Block {
            n_images: n,
            n_pristine,
            pixel: PixelBlock {
                mcc: mcc(&pixel),
                precision: prf.precision,
                recall: prf.recall,
                f1: prf.f1,
                iou: prf.iou,
                mcc_per_image_mean: if n_forged == 0 { 0.0 } else { mcc_sum / n_forged as f64 },
                counts: pixel,
            },
            image: ImageBlock { mcc: mcc(&image), counts: image },
        }
    }

    pub fn finish(&self) -> Result<Report> {
        if self.entries.is_empty() {
            return Err(Error::InvalidArgument("no images were evaluated".into()));
        }
        let mut tasks: Vec<Task> = self.entries.iter().map(|e| e.task).collect();
        let mut mods: Vec<Modality> = self.entries.iter().map(|e| e.modality).collect();
        let mut pairs: Vec<(Task, Modality)> = self.entries.iter().map(|e| (e.task, e.modality)).collect();
        tasks.sort();
        tasks.dedup();
        mods.sort();
        mods.dedup();
        pairs.sort();
        pairs.dedup();
        let e = &self.entries;
        Ok(Report {
            schema_version: SCHEMA_VERSION,
            zero_denominator_rule: ZERO_DENOMINATOR_RULE.into(),
            threshold: self.threshold,
            tau: self.tau,
            overall: self.block(e.iter()),
            per_task: tasks.iter().map(|&t| (t.to_string(), self.block(e.iter().filter(|x| x.task == t)))).collect(),
            per_modality: mods
                .iter()
                .map(|&m| (m.to_string(), self.block(e.iter().filter(|x| x.modality == m))))
                .collect(),
            per_task_modality: pairs
                .iter()
                .map(|&(t, m)| (format!("{t}/{m}"), self.block(e.iter().filter(|x| x.task == t && x.modality == m))))
                .collect(),
        })
    }
}
