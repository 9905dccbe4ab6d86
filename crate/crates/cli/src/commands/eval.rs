use std::io::Write;

use integscan_metrics::EvalAccumulator;

use super::emit;
use crate::data::{common_dims, load_all, load_checkpoint, load_records, predict_loaded, Predictor, PREDICTOR_HELP, SPLITS};
use crate::error::{CliError, CliResult};
use crate::settings::{key, Key, Kind, Settings, OUT};

pub const REPORT: &str = "report.json";

pub const SCHEMA: &[Key] = &[
    OUT,
    key("manifest", Kind::Path, None, "corpus manifest.jsonl"),
    key("checkpoint", Kind::Path, Some(""), "trained model (required with --predictor model)"),
    key("predictor", Kind::Text, Some("model"), PREDICTOR_HELP),
    key("split", Kind::Choice(SPLITS), Some("test"), "records to evaluate"),
    key("report", Kind::Path, Some(""), "report path (default <out>/report.json)"),
    key("threshold", Kind::Float, Some("0.5"), "pixel probability threshold"),
    key("tau", Kind::Float, Some("0.005"), "forged-pixel fraction that flags an image"),
    key("pristine", Kind::Bool, Some("true"), "also score each record's pristine image"),
    key("channels", Kind::Choice(&["1", "3"]), Some("3"), "image channels when no model is loaded"),
    key("batch_size", Kind::Int, Some("8"), "images per forward pass"),
];

/// Builds the prediction source named by `predictor`, loading `checkpoint` if needed.
pub fn predictor(s: &Settings) -> CliResult<Predictor> {
    Predictor::from_spec(s.raw("predictor"), || {
        let path = s.opt_path("checkpoint").ok_or_else(|| CliError::Usage("--predictor model needs --checkpoint".into()))?;
        Ok(load_checkpoint(&path)?.0)
    })
}

pub fn run(s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let dir = s.out().expect("out is required");
    let pred = predictor(s)?;
    let channels = pred.channels(s.usize("channels"));
    let (base, records) = load_records(&s.path("manifest"), s.raw("split"))?;
    let items = load_all(&base, &records, channels)?;
    pred.check_dims(common_dims(&items)?)?;
    let bs = s.usize("batch_size");
    let mut acc = EvalAccumulator::new(s.float("threshold"), s.float("tau"))?;
    for (l, p) in items.iter().zip(predict_loaded(&pred, &items, bs, false)?) {
        acc.add_forged(l.record.task, l.record.modality, &p, &l.gt)?;
    }
    if s.flag("pristine") {
        for (l, p) in items.iter().zip(predict_loaded(&pred, &items, bs, true)?) {
            acc.add_pristine(l.record.task, l.record.modality, &p);
        }
    }
    let report = acc.finish()?;
    let path = s.opt_path("report").unwrap_or_else(|| dir.join(REPORT));
    report.write(&path).map_err(|e| CliError::io(&path, e))?;
    log::info!(
        "{} forged images: pixel mcc {:.4} f1 {:.4}, image mcc {:.4}",
        report.overall.n_images - report.overall.n_pristine,
        report.overall.pixel.mcc,
        report.overall.pixel.f1,
        report.overall.image.mcc
    );
    emit(out, format!("pixel_mcc {}", report.overall.pixel.mcc))?;
    emit(out, format!("pixel_f1 {}", report.overall.pixel.f1))?;
    emit(out, format!("image_mcc {}", report.overall.image.mcc))?;
    emit(out, path.display())
}
