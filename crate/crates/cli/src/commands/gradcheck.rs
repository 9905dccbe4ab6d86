use std::io::Write;

use integscan_core::gradcheck::{model_check, op_suite, GradCheckReport, OpCheck, SuiteOptions};
use integscan_core::model::{ModelConfig, SsmMode};

use super::emit;
use crate::error::{CliError, CliResult};
use crate::settings::{key, Key, Kind, Settings};

pub const RESULTS: &str = "gradcheck.csv";

pub const SCHEMA: &[Key] = &[
    key("out", Kind::Path, Some(""), "optional directory for gradcheck.csv"),
    key("tol", Kind::Float, Some("0.0001"), "largest accepted relative error"),
    key("eps", Kind::Float, Some("0.00001"), "central-difference step"),
    key("ssm_mode", Kind::Choice(&["both", "scan", "attn"]), Some("both"), "token mixer(s) for the whole-model check"),
    key("embed_dim", Kind::Int, Some("8"), "model check token width"),
    key("depth", Kind::Int, Some("2"), "model check encoder blocks"),
    key("size", Kind::Int, Some("16"), "model check image side"),
    key("channels", Kind::Choice(&["1", "3"]), Some("3"), "model check input channels"),
    key("elements", Kind::Int, Some("4"), "elements checked per model parameter"),
    key("shapes", Kind::Int, Some("5"), "random shapes per op"),
];

/// Source of check results; swapped out in tests.
pub trait GradSuite {
    fn ops(&self, opts: &SuiteOptions) -> integscan_core::Result<Vec<OpCheck>>;
    fn model(&self, cfg: &ModelConfig, seed: u64, elements: usize, opts: &SuiteOptions) -> integscan_core::Result<GradCheckReport>;
}

pub struct CoreSuite;

impl GradSuite for CoreSuite {
    fn ops(&self, opts: &SuiteOptions) -> integscan_core::Result<Vec<OpCheck>> {
        op_suite(opts)
    }

    fn model(&self, cfg: &ModelConfig, seed: u64, elements: usize, opts: &SuiteOptions) -> integscan_core::Result<GradCheckReport> {
        model_check(cfg, seed, elements, opts)
    }
}

pub fn run(s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    run_with(s, &CoreSuite, out)
}

pub fn run_with(s: &Settings, suite: &dyn GradSuite, out: &mut dyn Write) -> CliResult<()> {
    let opts = SuiteOptions { eps: s.float("eps"), tol: s.float("tol"), shapes_per_op: s.usize("shapes").max(1), seed: s.int("seed") };
    let modes: &[SsmMode] = match s.raw("ssm_mode") {
        "scan" => &[SsmMode::Scan],
        "attn" => &[SsmMode::Attn],
        _ => &[SsmMode::Attn, SsmMode::Scan],
    };
    let size = s.usize("size");
    let mut checks = suite.ops(&opts)?;
    for &mode in modes {
        let cfg = ModelConfig {
            embed_dim: s.usize("embed_dim"),
            depth: s.usize("depth"),
            in_channels: s.usize("channels"),
            input_h: size,
            input_w: size,
            prompt_len: 8,
            vocab_size: 64,
            ssm_mode: mode,
            ..ModelConfig::default()
        };
        cfg.validate()?;
        log::info!("whole-model check ({mode})");
        let report = suite.model(&cfg, opts.seed, s.usize("elements").max(1), &opts)?;
        checks.push(OpCheck { name: format!("model({mode})"), report });
    }

    let mut csv = String::from("name,max_rel_err,passed\n");
    for c in &checks {
        let verdict = if c.report.passed { "ok" } else { "FAIL" };
        emit(out, format!("{:<26} {:>10.3e} {verdict}", c.name, c.report.max_rel_err))?;
        csv.push_str(&format!("{},{},{}\n", c.name, c.report.max_rel_err, c.report.passed));
        if let Some(f) = &c.report.failure {
            log::warn!("{}: {f}", c.name);
        }
    }
    if let Some(dir) = s.out() {
        let path = dir.join(RESULTS);
        std::fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
        emit(out, path.display())?;
    }
    let failed: Vec<&OpCheck> = checks.iter().filter(|c| !c.report.passed).collect();
    match failed.iter().max_by(|a, b| a.report.max_rel_err.total_cmp(&b.report.max_rel_err)) {
        None => Ok(()),
        Some(worst) => Err(CliError::GradCheck(format!(
            "{} of {} checks failed; worst is {} with relative error {:.3e} (tolerance {:.1e})",
            failed.len(),
            checks.len(),
            worst.name,
            worst.report.max_rel_err,
            opts.tol
        ))),
    }
}
