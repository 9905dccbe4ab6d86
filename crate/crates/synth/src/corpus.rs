//! Whole-corpus generation: planning, per-record synthesis, file layout and the
//! per-task/per-modality summary.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use integscan_imaging::io::{load_image, save_image, save_mask};
use integscan_imaging::resample::resize;
use integscan_imaging::{Image, Mask};
use rand::seq::SliceRandom;

use crate::config::SynthConfig;
use crate::error::{io_err, Error, Result};
use crate::manifest::{write_manifest, ForgeryRecord};
use crate::transform::Transform;
use crate::{rng, synth_cstd, synth_edd, synth_idd, synth_removal, texture, Modality, Split, Task};

/// Per-modality counts (blot, microscopy, macroscopy, facs) of the reference
/// image-processed subset.
pub const REFERENCE_COUNTS: [(Task, [usize; 4]); 4] = [
    (Task::Edd, [40_002, 25_002, 2_502, 2_502]),
    (Task::Idd, [9_999, 6_501, 1_251, 1_251]),
    (Task::Cstd, [9_999, 6_501, 1_251, 1_251]),
    (Task::Removal, [40_002, 25_002, 2_502, 2_502]),
];
const REFERENCE_MODALITIES: [Modality; 4] = [Modality::Blot, Modality::Microscopy, Modality::Macroscopy, Modality::Facs];

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    /// Record count per (task, modality) cell, generated in this order.
    pub counts: Vec<(Task, Modality, usize)>,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    /// Train/val/test fractions.
    pub split: (f64, f64, f64),
    pub synth: SynthConfig,
    /// Pristine PNGs to use instead of procedural textures.
    pub pristine_dir: Option<PathBuf>,
}

impl CorpusConfig {
    /// `count` records for every listed task, each in `modality`, or cycling
    /// through all modalities when `None`.
    pub fn uniform(tasks: &[Task], modality: Option<Modality>, count: usize, seed: u64, size: usize) -> Self {
        let mut counts = Vec::new();
        for &t in tasks {
            match modality {
                Some(m) => counts.push((t, m, count)),
                None => {
                    let ms = Modality::ALL;
                    for (k, &m) in ms.iter().enumerate() {
                        let n = count / ms.len() + usize::from(k < count % ms.len());
                        if n > 0 {
                            counts.push((t, m, n));
                        }
                    }
                }
            }
        }
        CorpusConfig {
            counts,
            seed,
            height: size,
            width: size,
            split: (0.8, 0.1, 0.1),
            synth: SynthConfig::default(),
            pristine_dir: None,
        }
    }

    /// Reference proportions scaled by `scale` (rounded per cell, at least one).
    pub fn reference(tasks: &[Task], scale: f64, seed: u64, size: usize) -> Self {
        let mut cfg = CorpusConfig::uniform(&[], None, 0, seed, size);
        for (task, row) in REFERENCE_COUNTS {
            if tasks.contains(&task) {
                for (m, n) in REFERENCE_MODALITIES.iter().zip(row) {
                    cfg.counts.push((task, *m, ((n as f64 * scale).round() as usize).max(1)));
                }
            }
        }
        cfg
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|c| c.2).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        if self.counts.is_empty() || self.counts.iter().any(|c| c.2 == 0) {
            return Err(Error::InvalidArgument("every configured count must be at least 1".into()));
        }
        if self.height < 32 || self.width < 32 {
            return Err(Error::InvalidArgument(format!("image size must be at least 32, got {}x{}", self.height, self.width)));
        }
        let (a, b, c) = self.split;
        if a < 0.0 || b < 0.0 || c < 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split fractions must be non-negative and sum to 1, got {:?}", self.split)));
        }
        Ok(())
    }
}

/// A record before synthesis.
#[derive(Clone, Debug, PartialEq)]
pub struct Planned {
    pub index: usize,
    pub id: String,
    pub task: Task,
    pub modality: Modality,
    pub seed: u64,
    pub split: Split,
}

/// Split sizes for `n` items: train and val rounded, test takes the rest.
pub fn split_sizes(n: usize, split: (f64, f64, f64)) -> (usize, usize, usize) {
    let train = ((n as f64 * split.0).round() as usize).min(n);
    let val = ((n as f64 * split.1).round() as usize).min(n - train);
    (train, val, n - train - val)
}

/// Assigns ids, seeds (base + index) and per-task stratified splits.
pub fn plan(cfg: &CorpusConfig) -> Result<Vec<Planned>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.total());
    for &(task, modality, n) in &cfg.counts {
        for _ in 0..n {
            let index = out.len();
            out.push(Planned {
                index,
                id: format!("{task}-{modality}-{index:06}"),
                task,
                modality,
                seed: cfg.seed.wrapping_add(index as u64),
                split: Split::Train,
            });
        }
    }
    for (k, &task) in Task::ALL.iter().enumerate() {
        let mut members: Vec<usize> = out.iter().filter(|p| p.task == task).map(|p| p.index).collect();
        members.shuffle(&mut rng::stream(cfg.seed, rng::SPLIT + 16 * k as u64));
        let (train, val, _) = split_sizes(members.len(), cfg.split);
        for (pos, &i) in members.iter().enumerate() {
            out[i].split = if pos < train {
                Split::Train
            } else if pos < train + val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

/// A synthesized record in memory.
#[derive(Clone, Debug)]
pub struct Sample {
    pub pristine: Image,
    pub forged: Image,
    pub gt: Mask,
    pub donor: Option<Image>,
    pub donor_mask: Option<Mask>,
    pub transform: Transform,
    /// Seed that produced the sample (differs from the planned seed only after a retry).
    pub seed: u64,
}

struct PristineSource {
    files: Vec<PathBuf>,
}

impl PristineSource {
    fn new(dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = dir else { return Ok(PristineSource { files: Vec::new() }) };
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::InvalidArgument(format!("{}: no PNG files", dir.display())));
        }
        Ok(PristineSource { files })
    }

    fn get(&self, cfg: &CorpusConfig, modality: Modality, index: usize, seed: u64) -> Result<Image> {
        if self.files.is_empty() {
            return texture::pristine(modality, cfg.height, cfg.width, seed);
        }
        let img = load_image(&self.files[index % self.files.len()])?;
        Ok(resize(&img, cfg.height, cfg.width)?.clamp01().quantize_u8())
    }
}

/// Seed offsets tried when a randomized construction finds no admissible layout.
const RETRY_STRIDE: u64 = 1 << 32;
const RETRIES: u64 = 4;

fn synthesize(p: &Planned, cfg: &CorpusConfig, source: &PristineSource) -> Result<Sample> {
    let mut last = None;
    for k in 0..RETRIES {
        let seed = p.seed.wrapping_add(k * RETRY_STRIDE);
        match synthesize_once(p, seed, cfg, source) {
            Ok(s) => return Ok(s),
            Err(e @ Error::Generation(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn synthesize_once(p: &Planned, seed: u64, cfg: &CorpusConfig, source: &PristineSource) -> Result<Sample> {
    let pristine = source.get(cfg, p.modality, p.index, seed)?;
    let plain = |forged, gt, transform| Sample { pristine: pristine.clone(), forged, gt, donor: None, donor_mask: None, transform, seed };
    let sample = match p.task {
        Task::Idd => {
            let o = synth_idd(&pristine, seed, &cfg.synth)?;
            plain(o.forged, o.gt, o.transform)
        }
        Task::Cstd => {
            let o = synth_cstd(&pristine, seed, &cfg.synth)?;
            let (dx, dy) = if o.band.horizontal { (o.band.shift, 0) } else { (0, o.band.shift) };
            plain(o.forged, o.gt, Transform { dx, dy, ..Transform::identity(0.0) })
        }
        Task::Removal => {
            let o = synth_removal(&pristine, seed, &cfg.synth)?;
            plain(o.forged, o.gt, Transform::identity(0.0))
        }
        Task::Edd => {
            let donor = source.get(cfg, p.modality, p.index + 1, seed ^ 0x5eed_d0e0_0000_0000)?;
            let o = synth_edd(&pristine, &donor, seed, &cfg.synth)?;
            Sample {
                pristine: pristine.clone(),
                forged: o.forged,
                gt: o.gt,
                donor: Some(donor),
                donor_mask: Some(o.donor_mask),
                transform: o.transform,
                seed,
            }
        }
    };
    Ok(Sample { forged: sample.forged.quantize_u8(), ..sample })
}

/// Synthesizes one planned record in memory.
pub fn generate_sample(p: &Planned, cfg: &CorpusConfig) -> Result<Sample> {
    synthesize(p, cfg, &PristineSource::new(cfg.pristine_dir.as_deref())?)
}

/// Counts per task × modality and per task × split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub by_modality: BTreeMap<(Task, Modality), usize>,
    pub by_split: BTreeMap<(Task, Split), usize>,
}

impl Summary {
    pub fn from_records(records: &[ForgeryRecord]) -> Self {
        let mut s = Summary::default();
        for r in records {
            *s.by_modality.entry((r.task, r.modality)).or_default() += 1;
            *s.by_split.entry((r.task, r.split)).or_default() += 1;
        }
        s
    }

    pub fn task_total(&self, task: Task) -> usize {
        self.by_modality.iter().filter(|((t, _), _)| *t == task).map(|(_, n)| n).sum()
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<8}", "task")?;
        for m in Modality::ALL {
            write!(f, " {:>10}", m.as_str())?;
        }
        writeln!(f, " {:>8} {:>6} {:>6} {:>6}", "total", "train", "val", "test")?;
        for &t in Task::ALL {
            if self.task_total(t) == 0 {
                continue;
            }
            write!(f, "{:<8}", t.as_str())?;
            for &m in Modality::ALL {
                write!(f, " {:>10}", self.by_modality.get(&(t, m)).copied().unwrap_or(0))?;
            }
            write!(f, " {:>8}", self.task_total(t))?;
            for &s in Split::ALL {
                write!(f, " {:>6}", self.by_split.get(&(t, s)).copied().unwrap_or(0))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

const MANIFEST: &str = "manifest.jsonl";

/// Generates every planned record under `out`, writes `out/manifest.jsonl` and
/// returns the records with the summary.
pub fn write_corpus(cfg: &CorpusConfig, out: &Path) -> Result<(Vec<ForgeryRecord>, Summary)> {
    let planned = plan(cfg)?;
    let source = PristineSource::new(cfg.pristine_dir.as_deref())?;
    for sub in ["pristine", "forged", "masks", "donors", "donor_masks"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let mut records = Vec::with_capacity(planned.len());
    for p in &planned {
        let s = synthesize(p, cfg, &source)?;
        let rel = |dir: &str| format!("{dir}/{}.png", p.id);
        save_image(&s.pristine, out.join(rel("pristine")))?;
        save_image(&s.forged, out.join(rel("forged")))?;
        save_mask(&s.gt, out.join(rel("masks")))?;
        let (donor_path, donor_mask_path) = match (&s.donor, &s.donor_mask) {
            (Some(d), Some(m)) => {
                save_image(d, out.join(rel("donors")))?;
                save_mask(m, out.join(rel("donor_masks")))?;
                (Some(rel("donors")), Some(rel("donor_masks")))
            }
            _ => (None, None),
        };
        records.push(ForgeryRecord {
            id: p.id.clone(),
            task: p.task,
            modality: p.modality,
            pristine_path: rel("pristine"),
            forged_path: rel("forged"),
            mask_path: rel("masks"),
            donor_path,
            donor_mask_path,
            seed: s.seed,
            transform: s.transform,
            split: p.split,
        });
    }
    write_manifest(&records, out.join(MANIFEST))?;
    let summary = Summary::from_records(&records);
    Ok((records, summary))
}

pub fn manifest_path(out: &Path) -> PathBuf {
    out.join(MANIFEST)
}
