use std::fs::File;
use std::io::Write;
use std::path::Path;

use integscan_core::attn::GateKind;
use integscan_core::model::train::{dataset_loss, fit, Adam, FitOptions, Sample};
use integscan_core::model::{Model, ModelConfig, SsmMode};
use integscan_imaging::Mask;
use integscan_metrics::{confusion_counts, prf_iou, ConfusionCounts};
use serde_json::json;

use super::emit;
use crate::data::{common_dims, load_all, load_checkpoint, load_records, predict_loaded, save_checkpoint, to_sample, Loaded, Predictor};
use crate::error::{CliError, CliResult};
use crate::settings::{key, Key, Kind, Settings, OUT};

pub const LOSS_LOG: &str = "loss.csv";
pub const SUMMARY: &str = "train-summary.json";
pub const CHECKPOINT: &str = "checkpoint.bin";

pub const SCHEMA: &[Key] = &[
    OUT,
    key("manifest", Kind::Path, None, "corpus manifest.jsonl"),
    key("epochs", Kind::Int, Some("20"), "passes over the train split"),
    key("batch_size", Kind::Int, Some("8"), "images per step"),
    key("lr", Kind::Float, Some("0.001"), "Adam learning rate"),
    key("embed_dim", Kind::Int, Some("32"), "token width"),
    key("depth", Kind::Int, Some("2"), "encoder blocks"),
    key("ssm_mode", Kind::Choice(&["scan", "attn"]), Some("attn"), "token mixer"),
    key("gate", Kind::Choice(&["channel", "scalar"]), Some("channel"), "attention gate"),
    key("prompt_len", Kind::Int, Some("16"), "prompt tokens"),
    key("vocab_size", Kind::Int, Some("4096"), "prompt vocabulary"),
    key("channels", Kind::Choice(&["1", "3"]), Some("3"), "model input channels"),
    key("threshold", Kind::Float, Some("0.5"), "probability threshold for the reported F1"),
    key("resume", Kind::Path, Some(""), "checkpoint to continue from (its architecture wins)"),
    key("checkpoint_out", Kind::Path, Some(""), "where to save the model (default <out>/checkpoint.bin)"),
];

fn model_config(s: &Settings, dims: (usize, usize, usize)) -> CliResult<ModelConfig> {
    let cfg = ModelConfig {
        embed_dim: s.usize("embed_dim"),
        depth: s.usize("depth"),
        in_channels: dims.0,
        input_h: dims.1,
        input_w: dims.2,
        prompt_len: s.usize("prompt_len"),
        vocab_size: s.usize("vocab_size"),
        ssm_mode: s.raw("ssm_mode").parse::<SsmMode>()?,
        gate: s.raw("gate").parse::<GateKind>()?,
        ..ModelConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Pooled pixel F1 of `pred` on the forged images of `items`.
pub fn pooled_f1(pred: &Predictor, items: &[Loaded], batch_size: usize, threshold: f64) -> CliResult<f64> {
    let probs = predict_loaded(pred, items, batch_size, false)?;
    let mut c = ConfusionCounts::default();
    for (p, l) in probs.iter().zip(items) {
        let (h, w) = l.gt.dims();
        c.merge(&confusion_counts(&Mask::threshold(h, w, p, threshold)?, &l.gt)?);
    }
    Ok(prf_iou(&c).f1)
}

fn samples(items: &[Loaded]) -> CliResult<Vec<Sample>> {
    items.iter().map(to_sample).collect()
}

fn finite(what: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::NonFinite(format!("{what} is {v}")))
    }
}

pub fn run(s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let dir = s.out().expect("out is required");
    let batch_size = s.usize("batch_size");
    if batch_size == 0 {
        return Err(CliError::Usage("--batch-size must be at least 1".into()));
    }
    let resumed = match s.opt_path("resume") {
        Some(p) => Some(load_checkpoint(&p)?),
        None => None,
    };
    let channels = match &resumed {
        Some((m, _)) => m.config().in_channels,
        None => s.usize("channels"),
    };
    let manifest = s.path("manifest");
    let (base, train_records) = load_records(&manifest, "train")?;
    let (_, val_records) = load_records(&manifest, "val")?;
    let train_items = load_all(&base, &train_records, channels)?;
    let val_items = load_all(&base, &val_records, channels)?;
    let dims = common_dims(&train_items)?;
    let (mut model, mut opt) = match resumed {
        Some((m, adam)) => {
            log::info!("resuming from {} (step {})", s.raw("resume"), adam.as_ref().map_or(0, |a| a.step));
            (m, adam.unwrap_or_default())
        }
        None => (Model::new(model_config(s, dims)?, s.int("seed"))?, Adam::default()),
    };
    opt.lr = s.float("lr");
    Predictor::Model(Box::new(model.clone())).check_dims(dims)?;
    if !val_items.is_empty() {
        Predictor::Model(Box::new(model.clone())).check_dims(common_dims(&val_items)?)?;
    }
    let train = samples(&train_items)?;
    let val = samples(&val_items)?;
    log::info!("{} train / {} val images, {} parameters", train.len(), val.len(), model.num_parameters());

    let initial = finite("initial loss", dataset_loss(&model, &train, batch_size)?)?;
    log::info!("initial loss {initial:.6}");
    let log_path = dir.join(LOSS_LOG);
    let mut log_file = File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    writeln!(log_file, "epoch,train_loss,val_loss").map_err(|e| CliError::io(&log_path, e))?;

    let opts = FitOptions { epochs: s.usize("epochs"), batch_size, seed: s.int("seed") };
    let mut row_err = None;
    let fitted = fit(&mut model, &mut opt, &train, &opts, |st, m| {
        let val_loss = if val.is_empty() { String::new() } else { dataset_loss(m, &val, batch_size)?.to_string() };
        log::info!("epoch {} train {:.6} val {}", st.epoch, st.train_loss, val_loss);
        if let Err(e) = writeln!(log_file, "{},{},{}", st.epoch, st.train_loss, val_loss).and_then(|_| log_file.flush()) {
            row_err.get_or_insert(CliError::io(&log_path, e));
        }
        if !st.train_loss.is_finite() {
            return Err(integscan_core::Error::NonFinite { op: "loss", node: st.epoch });
        }
        Ok(())
    });
    if let Err(e) = fitted {
        let e = CliError::from(e);
        return Err(match e {
            CliError::NonFinite(m) => CliError::NonFinite(format!("{m} (see {})", log_path.display())),
            other => other,
        });
    }
    if let Some(e) = row_err {
        return Err(e);
    }
    // Full pass with the final parameters, comparable to the initial loss.
    let final_loss = finite("final loss", dataset_loss(&model, &train, batch_size)?)?;
    log::info!("final loss {final_loss:.6}");

    let ckpt = s.opt_path("checkpoint_out").unwrap_or_else(|| dir.join(CHECKPOINT));
    save_checkpoint(&ckpt, &model, &opt)?;
    let threshold = s.float("threshold");
    let pred = Predictor::Model(Box::new(model));
    let train_f1 = pooled_f1(&pred, &train_items, batch_size, threshold)?;
    let val_f1 = if val_items.is_empty() { None } else { Some(pooled_f1(&pred, &val_items, batch_size, threshold)?) };
    let summary = json!({
        "initial_loss": initial,
        "final_loss": final_loss,
        "epochs": opts.epochs,
        "train_f1": train_f1,
        "val_f1": val_f1,
        "checkpoint": ckpt.display().to_string(),
    });
    write_json(&dir.join(SUMMARY), &summary)?;
    emit(out, format!("initial_loss {initial}"))?;
    emit(out, format!("final_loss {final_loss}"))?;
    emit(out, format!("train_f1 {train_f1}"))?;
    if let Some(v) = val_f1 {
        emit(out, format!("val_f1 {v}"))?;
    }
    emit(out, ckpt.display())
}

pub(crate) fn write_json(path: &Path, v: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).expect("json value serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}
