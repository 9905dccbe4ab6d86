//! Subcommand schemas and entry points.

use std::io::Write;

use crate::error::CliResult;
use crate::settings::{Key, Settings};

pub mod eval;
pub mod gradcheck;
pub mod perturb;
pub mod sweep;
pub mod synth;
pub mod train;

pub struct Command {
    pub name: &'static str,
    pub about: &'static str,
    pub schema: &'static [Key],
    pub run: fn(&Settings, &mut dyn Write) -> CliResult<()>,
}

pub const COMMANDS: &[Command] = &[
    Command { name: "synth", about: "Generate a synthetic forgery corpus", schema: synth::SCHEMA, run: synth::run },
    Command { name: "train", about: "Train a localization model on a corpus", schema: train::SCHEMA, run: train::run },
    Command { name: "eval", about: "Score predictions and write a JSON report", schema: eval::SCHEMA, run: eval::run },
    Command { name: "perturb", about: "Apply one attack to every image in a tree", schema: perturb::SCHEMA, run: perturb::run },
    Command { name: "sweep", about: "Measure F1 and SSIM under the full attack protocol", schema: sweep::SCHEMA, run: sweep::run },
    Command { name: "gradcheck", about: "Compare analytic and finite-difference gradients", schema: gradcheck::SCHEMA, run: gradcheck::run },
];

pub fn find(name: &str) -> Option<&'static Command> {
    COMMANDS.iter().find(|c| c.name == name)
}

pub(crate) fn emit(out: &mut dyn Write, line: impl std::fmt::Display) -> CliResult<()> {
    writeln!(out, "{line}").map_err(|e| crate::error::CliError::io(std::path::Path::new("<stdout>"), e))
}
