use std::fs;
use std::io::Write;
use std::path::Path;

use integscan_core::model::prompt::fnv1a64;
use integscan_imaging::io::{load_image, load_mask, save_image, save_mask};
use integscan_robustness::{perturb, perturb_mask, Attack, AttackKind};
use walkdir::WalkDir;

use super::emit;
use crate::error::{CliError, CliResult};
use crate::lock::LOCK_FILE;
use crate::settings::{key, Key, Kind, Settings, OUT, RUN_MANIFEST};

pub const SCHEMA: &[Key] = &[
    OUT,
    key("in", Kind::Path, None, "input directory"),
    key("attack", Kind::Text, None, "jpeg, blur, noise, brightness, contrast or crop"),
    key("severity", Kind::Text, None, "ladder step 1..5"),
];

fn usage(msg: String) -> CliError {
    CliError::Usage(format!("{msg}\nseverity ladders (1..5):\n{}", AttackKind::ladder_listing()))
}

pub fn parse_attack(kind: &str, severity: &str) -> CliResult<Attack> {
    let kind: AttackKind = kind.parse().map_err(|e: integscan_robustness::Error| usage(e.to_string()))?;
    let severity: u8 = severity.parse().map_err(|_| usage(format!("--severity must be an integer in 1..5, got {severity:?}")))?;
    Attack::new(kind, severity).map_err(|e| usage(e.to_string()))
}

fn is_mask_path(rel: &Path) -> bool {
    rel.components().any(|c| c.as_os_str().to_string_lossy().to_ascii_lowercase().contains("mask"))
}

fn is_png(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Seed for one file: the global seed mixed with its relative path.
pub fn file_seed(seed: u64, rel: &Path) -> u64 {
    seed ^ fnv1a64(rel.to_string_lossy().replace('\\', "/").as_bytes())
}

pub fn run(s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let attack = parse_attack(s.raw("attack"), s.raw("severity"))?;
    let input = s.path("in");
    let dest = s.out().expect("out is required");
    if !input.is_dir() {
        return Err(CliError::io(&input, "not a directory"));
    }
    if dest.starts_with(&input) || input.starts_with(&dest) {
        return Err(CliError::Usage("--in and --out must not contain each other".into()));
    }
    let seed = s.int("seed");
    let (mut perturbed, mut masks, mut copied) = (0usize, 0usize, 0usize);
    for entry in WalkDir::new(&input).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::io(&input, e))?;
        let rel = entry.path().strip_prefix(&input).expect("walk stays under its root");
        let target = dest.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&target).map_err(|e| CliError::io(&target, e))?;
            continue;
        }
        if rel.file_name().is_some_and(|n| n == LOCK_FILE || n == RUN_MANIFEST) {
            continue;
        }
        let src = entry.path();
        if is_png(rel) && is_mask_path(rel) {
            // Masks follow geometric attacks only.
            if attack.kind == AttackKind::Crop {
                save_mask(&perturb_mask(&load_mask(src)?, &attack)?, &target)?;
            } else {
                fs::copy(src, &target).map_err(|e| CliError::io(src, e))?;
            }
            masks += 1;
        } else if is_png(rel) {
            let img = load_image(src)?;
            save_image(&perturb(&img, &attack, file_seed(seed, rel))?, &target)?;
            perturbed += 1;
        } else {
            fs::copy(src, &target).map_err(|e| CliError::io(src, e))?;
            copied += 1;
        }
    }
    log::info!("{attack}: {perturbed} images perturbed, {masks} masks and {copied} other files carried over");
    emit(out, dest.display())
}
