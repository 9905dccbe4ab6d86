use std::io::Write;

use integscan_robustness::{exceeds_skip_limit, robustness_sweep, Attack, AttackKind, Skip, SweepSample, SEVERITIES};
use serde_json::json;

use super::emit;
use super::eval::predictor;
use super::perturb::parse_attack;
use super::train::write_json;
use crate::data::{load_one, load_records, Loaded, PREDICTOR_HELP, SPLITS};
use crate::error::{CliError, CliResult};
use crate::settings::{key, Key, Kind, Settings, OUT};

pub const CURVES: &str = "robustness.csv";
pub const SKIPPED: &str = "skipped.json";

pub const SCHEMA: &[Key] = &[
    OUT,
    key("manifest", Kind::Path, None, "corpus manifest.jsonl"),
    key("checkpoint", Kind::Path, Some(""), "trained model (required with --predictor model)"),
    key("predictor", Kind::Text, Some("model"), PREDICTOR_HELP),
    key("split", Kind::Choice(SPLITS), Some("test"), "records to sweep"),
    key("attacks", Kind::Text, Some("all"), "all, or a comma list of kinds and kind@severity items"),
    key("threshold", Kind::Float, Some("0.5"), "pixel probability threshold"),
    key("limit", Kind::Int, Some("0"), "use at most this many records (0 = all)"),
    key("channels", Kind::Choice(&["1", "3"]), Some("3"), "image channels when no model is loaded"),
];

pub fn parse_attacks(spec: &str) -> CliResult<Vec<Attack>> {
    if spec == "all" {
        return Ok(Attack::protocol());
    }
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('@') {
            Some((k, s)) => out.push(parse_attack(k, s)?),
            None => {
                let kind = parse_attack(item, "1")?.kind;
                out.extend(SEVERITIES.map(|s| Attack { kind, severity: s }));
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("--attacks names no attack; kinds are {}", AttackKind::ALL.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", "))));
    }
    Ok(out)
}

pub fn run(s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let dir = s.out().expect("out is required");
    let attacks = parse_attacks(s.raw("attacks"))?;
    let pred = predictor(s)?;
    let channels = pred.channels(s.usize("channels"));
    let (base, mut records) = load_records(&s.path("manifest"), s.raw("split"))?;
    if s.usize("limit") > 0 {
        records.truncate(s.usize("limit"));
    }
    let total = records.len();
    let mut items: Vec<Loaded> = Vec::new();
    let mut skipped = Vec::new();
    for r in &records {
        match load_one(&base, r, channels) {
            Ok(l) => items.push(l),
            Err(e) => {
                log::warn!("skipping {}: {e}", r.id);
                skipped.push(Skip { id: r.id.clone(), reason: e.to_string() });
            }
        }
    }
    let skipped_path = dir.join(SKIPPED);
    write_json(&skipped_path, &json!({ "total": total, "skipped": skipped }))?;
    if exceeds_skip_limit(skipped.len(), total) {
        return Err(CliError::Io {
            path: skipped_path.display().to_string(),
            detail: format!("{} of {total} inputs were unreadable, more than the tolerated 10%", skipped.len()),
        });
    }
    if let Some(first) = items.first() {
        pred.check_dims(first.forged.dims())?;
    }
    let samples: Vec<SweepSample> =
        items.iter().map(|l| SweepSample { id: l.record.id.clone(), image: l.forged.clone(), gt: l.gt.clone() }).collect();
    log::info!("sweeping {} images over {} attacks", samples.len(), attacks.len());
    let mut table = robustness_sweep(&samples, &attacks, s.float("threshold"), s.int("seed"), |i, img| {
        let l = &items[i];
        pred.predict(&[img], &[(l.record.modality, l.record.task)], &[Some(&l.gt)])
            .map(|mut v| v.pop().unwrap_or_default())
            .map_err(|e| e.to_string())
    })?;
    table.skipped = skipped;
    let path = dir.join(CURVES);
    std::fs::write(&path, table.to_csv()).map_err(|e| CliError::io(&path, e))?;
    for r in &table.rows {
        log::debug!("{}@{} f1 {:.4} ssim {:.4}", r.attack, r.severity, r.f1, r.ssim);
    }
    emit(out, path.display())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attack_lists() {
        assert_eq!(parse_attacks("all").unwrap().len(), 30);
        assert_eq!(parse_attacks("blur,noise@2").unwrap().len(), 6);
        assert!(parse_attacks("blur@7").is_err());
        assert!(parse_attacks(",").is_err());
    }
}
