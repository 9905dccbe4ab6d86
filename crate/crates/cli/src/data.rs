//! Manifest-driven loading and the prediction sources shared by `train`,
//! `eval` and `sweep`.

use std::path::{Path, PathBuf};

use integscan_core::model::checkpoint;
use integscan_core::model::train::{Adam, Sample};
use integscan_core::model::Model;
use integscan_core::{Modality, Split, Task, Tensor};
use integscan_imaging::io::{load_image, load_mask};
use integscan_imaging::{Image, Mask};
use integscan_synth::{read_manifest, ForgeryRecord};

use crate::error::{CliError, CliResult};

pub const SPLITS: &[&str] = &["train", "val", "test", "heldout", "all"];

pub fn split_matches(selector: &str, split: Split) -> bool {
    match selector {
        "all" => true,
        "heldout" => split != Split::Train,
        s => split.as_str() == s,
    }
}

/// Records of `manifest` in `selector`, with the directory their paths are relative to.
pub fn load_records(manifest: &Path, selector: &str) -> CliResult<(PathBuf, Vec<ForgeryRecord>)> {
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let records = read_manifest(manifest)?;
    Ok((base, records.into_iter().filter(|r| split_matches(selector, r.split)).collect()))
}

/// Brings an image to `channels` planes: gray is replicated, colour reduced to luma.
pub fn to_channels(img: Image, channels: usize) -> CliResult<Image> {
    match (img.channels(), channels) {
        (a, b) if a == b => Ok(img),
        (1, c) => Ok(img.expand_channels(c)?),
        (_, 1) => {
            let (h, w) = (img.height(), img.width());
            Ok(Image::new(1, h, w, img.luma()?)?)
        }
        (a, b) => Err(CliError::ShapeConfig(format!("cannot convert {a}-channel image to {b} channels"))),
    }
}

#[derive(Clone, Debug)]
pub struct Loaded {
    pub record: ForgeryRecord,
    pub forged: Image,
    pub gt: Mask,
    pub pristine: Image,
}

pub fn load_one(base: &Path, r: &ForgeryRecord, channels: usize) -> CliResult<Loaded> {
    let forged = to_channels(load_image(base.join(&r.forged_path))?, channels)?;
    let pristine = to_channels(load_image(base.join(&r.pristine_path))?, channels)?;
    let gt = load_mask(base.join(&r.mask_path))?;
    if (forged.height(), forged.width()) != gt.dims() || !forged.same_shape(&pristine) {
        return Err(CliError::ShapeConfig(format!("{}: image, pristine and mask sizes disagree", r.id)));
    }
    Ok(Loaded { record: r.clone(), forged, gt, pristine })
}

pub fn load_all(base: &Path, records: &[ForgeryRecord], channels: usize) -> CliResult<Vec<Loaded>> {
    records.iter().map(|r| load_one(base, r, channels)).collect()
}

pub fn image_tensor(img: &Image) -> CliResult<Tensor> {
    let (c, h, w) = img.dims();
    Ok(Tensor::new(vec![c, h, w], img.data().to_vec())?)
}

pub fn to_sample(l: &Loaded) -> CliResult<Sample> {
    let (h, w) = l.gt.dims();
    Ok(Sample {
        image: image_tensor(&l.forged)?,
        mask: Tensor::new(vec![1, h, w], l.gt.to_values())?,
        modality: l.record.modality,
        task: l.record.task,
    })
}

/// Common size of a loaded set, or a shape error naming the first outlier.
pub fn common_dims(items: &[Loaded]) -> CliResult<(usize, usize, usize)> {
    let first = items.first().ok_or_else(|| CliError::Usage("the selected split holds no records".into()))?;
    let d = first.forged.dims();
    if let Some(o) = items.iter().find(|l| l.forged.dims() != d) {
        return Err(CliError::ShapeConfig(format!("{} is {:?}, expected {d:?}", o.record.id, o.forged.dims())));
    }
    Ok(d)
}

/// Reads a checkpoint, keeping the path in I/O errors.
pub fn load_checkpoint(path: &Path) -> CliResult<(Model, Option<Adam>)> {
    checkpoint::load(path).map_err(|e| match e {
        integscan_core::Error::Io(io) => CliError::io(path, io),
        other => CliError::from(other),
    })
}

pub fn save_checkpoint(path: &Path, model: &Model, opt: &Adam) -> CliResult<()> {
    checkpoint::save(path, model, Some(opt)).map_err(|e| match e {
        integscan_core::Error::Io(io) => CliError::io(path, io),
        other => CliError::from(other),
    })
}

pub const PREDICTOR_HELP: &str = "model, gt, or constant:<p>";

/// Where per-pixel probabilities come from.
#[derive(Debug)]
pub enum Predictor {
    Model(Box<Model>),
    /// The ground truth itself (an empty map for pristine images).
    Gt,
    Constant(f64),
}

pub fn parse_predictor(spec: &str) -> CliResult<Option<f64>> {
    match spec {
        "model" => Ok(None),
        "gt" => Ok(Some(f64::NAN)),
        s => match s.strip_prefix("constant:").map(str::parse::<f64>) {
            Some(Ok(v)) if (0.0..=1.0).contains(&v) => Ok(Some(v)),
            _ => Err(CliError::Usage(format!("--predictor must be {PREDICTOR_HELP} with p in [0, 1], got {spec:?}"))),
        },
    }
}

impl Predictor {
    pub fn from_spec(spec: &str, model: impl FnOnce() -> CliResult<Model>) -> CliResult<Self> {
        Ok(match parse_predictor(spec)? {
            None => Predictor::Model(Box::new(model()?)),
            Some(v) if v.is_nan() => Predictor::Gt,
            Some(v) => Predictor::Constant(v),
        })
    }

    /// Checks that the model accepts images of this size.
    pub fn check_dims(&self, dims: (usize, usize, usize)) -> CliResult<()> {
        if let Predictor::Model(m) = self {
            let c = m.config();
            if (c.in_channels, c.input_h, c.input_w) != dims {
                return Err(CliError::ShapeConfig(format!(
                    "checkpoint expects {}x{}x{} inputs, images are {}x{}x{}",
                    c.in_channels, c.input_h, c.input_w, dims.0, dims.1, dims.2
                )));
            }
        }
        Ok(())
    }

    pub fn channels(&self, default: usize) -> usize {
        match self {
            Predictor::Model(m) => m.config().in_channels,
            _ => default,
        }
    }

    /// Probabilities for each image; `gts` is consulted by the `gt` source only.
    pub fn predict(&self, images: &[&Image], keys: &[(Modality, Task)], gts: &[Option<&Mask>]) -> CliResult<Vec<Vec<f64>>> {
        match self {
            Predictor::Model(m) => {
                let Some(first) = images.first() else { return Ok(Vec::new()) };
                let (c, h, w) = first.dims();
                let mut data = Vec::with_capacity(images.len() * c * h * w);
                for img in images {
                    data.extend_from_slice(img.data());
                }
                let batch = Tensor::new(vec![images.len(), c, h, w], data)?;
                let p = m.predict(&batch, keys)?;
                Ok(p.probabilities.data().chunks(h * w).map(<[f64]>::to_vec).collect())
            }
            Predictor::Gt => Ok(images
                .iter()
                .zip(gts)
                .map(|(img, gt)| match gt {
                    Some(m) => m.to_values(),
                    None => vec![0.0; img.height() * img.width()],
                })
                .collect()),
            Predictor::Constant(v) => Ok(images.iter().map(|img| vec![*v; img.height() * img.width()]).collect()),
        }
    }
}

/// Probabilities for the forged (or, with `pristine`, the pristine) image of every item, in batches.
pub fn predict_loaded(pred: &Predictor, items: &[Loaded], batch_size: usize, pristine: bool) -> CliResult<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(batch_size.max(1)) {
        let images: Vec<&Image> = chunk.iter().map(|l| if pristine { &l.pristine } else { &l.forged }).collect();
        let keys: Vec<(Modality, Task)> = chunk.iter().map(|l| (l.record.modality, l.record.task)).collect();
        let gts: Vec<Option<&Mask>> = chunk.iter().map(|l| (!pristine).then_some(&l.gt)).collect();
        out.extend(pred.predict(&images, &keys, &gts)?);
    }
    Ok(out)
}
