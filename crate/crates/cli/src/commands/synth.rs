use std::io::Write;

use integscan_synth::corpus::{manifest_path, write_corpus, CorpusConfig};
use integscan_synth::{Modality, Task};

use super::emit;
use crate::error::{CliError, CliResult};
use crate::settings::{key, Key, Kind, Settings, OUT};

pub const SCHEMA: &[Key] = &[
    OUT,
    key("task", Kind::Choice(&["edd", "idd", "cstd", "removal", "all"]), Some("all"), "forgery task, or all four"),
    key("count", Kind::Int, Some("10"), "records per task (uniform proportions)"),
    key("modality", Kind::Choice(&["microscopy", "blot", "macroscopy", "facs", "mixed"]), Some("mixed"), "image modality; mixed cycles through all"),
    key("size", Kind::Int, Some("64"), "image side in pixels"),
    key("pristine", Kind::Path, Some(""), "directory of pristine PNGs to use instead of procedural textures"),
    key("proportions", Kind::Choice(&["uniform", "reference"]), Some("uniform"), "uniform counts or the reference per-modality proportions"),
    key("scale", Kind::Float, Some("0.001"), "scale applied to the reference proportions"),
];

fn tasks(s: &Settings) -> Vec<Task> {
    match s.raw("task") {
        "all" => Task::ALL.to_vec(),
        t => vec![t.parse().expect("validated choice")],
    }
}

pub fn config(s: &Settings) -> CliResult<CorpusConfig> {
    let tasks = tasks(s);
    let size = s.usize("size");
    let mut cfg = match s.raw("proportions") {
        "reference" => {
            let scale = s.float("scale");
            if scale <= 0.0 {
                return Err(CliError::Usage(format!("--scale must be positive, got {scale}")));
            }
            CorpusConfig::reference(&tasks, scale, s.int("seed"), size)
        }
        _ => {
            let modality = match s.raw("modality") {
                "mixed" => None,
                m => Some(m.parse::<Modality>().expect("validated choice")),
            };
            CorpusConfig::uniform(&tasks, modality, s.usize("count"), s.int("seed"), size)
        }
    };
    cfg.pristine_dir = s.opt_path("pristine");
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let cfg = config(s)?;
    let dir = s.out().expect("out is required");
    log::info!("synthesizing {} records into {}", cfg.total(), dir.display());
    let (records, summary) = write_corpus(&cfg, &dir)?;
    log::info!("wrote {} records", records.len());
    write!(out, "{summary}").map_err(|e| CliError::io(std::path::Path::new("<stdout>"), e))?;
    emit(out, manifest_path(&dir).display())
}
