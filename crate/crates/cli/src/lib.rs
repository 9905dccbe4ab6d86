//! The `integscan` command-line front end.
//!
//! Every subcommand reads flat `key = value` settings (see [`settings`]),
//! claims its output directory with a lock file, records the resolved
//! settings there, and maps failures onto the exit codes in [`error::exit`].

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{Arg, ArgMatches};

pub mod commands;
pub mod data;
pub mod error;
pub mod lock;
pub mod settings;

pub use error::{exit, CliError, CliResult};

use commands::{Command, COMMANDS};
use settings::{parse_config, Key, Kind, Settings, COMMON};

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn arg_for(key: &Key) -> Arg {
    let mut help = key.help.to_string();
    match (key.default, key.kind) {
        (None, _) => help.push_str(" [required]"),
        (Some(""), _) => {}
        (Some(d), _) => help.push_str(&format!(" [default: {d}]")),
    }
    if let Kind::Choice(opts) = key.kind {
        help.push_str(&format!(" [one of: {}]", opts.join(", ")));
    }
    Arg::new(key.name).long(flag_name(key.name)).value_name("VALUE").num_args(1).allow_hyphen_values(true).help(help)
}

pub fn cli() -> clap::Command {
    let mut app = clap::Command::new("integscan")
        .about("Forgery localization for scientific images")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for c in COMMANDS {
        let mut sub = clap::Command::new(c.name).about(c.about).arg(
            Arg::new("config").long("config").value_name("FILE").help("settings file (`key = value` lines); flags override it"),
        );
        for key in COMMON.iter().chain(c.schema) {
            sub = sub.arg(arg_for(key));
        }
        app = app.subcommand(sub);
    }
    app
}

fn flag_pairs(c: &Command, m: &ArgMatches) -> Vec<(String, String)> {
    COMMON
        .iter()
        .chain(c.schema)
        .filter(|k| m.value_source(k.name) == Some(ValueSource::CommandLine))
        .filter_map(|k| m.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect()
}

fn init_logging(level: &str) {
    let filter = level.parse().unwrap_or(log::LevelFilter::Info);
    // A second initialization in the same process is harmless.
    let _ = env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .format_target(false)
        .target(env_logger::Target::Stderr)
        .try_init();
    log::set_max_level(filter);
}

/// Resolves the settings for one subcommand invocation.
pub fn resolve(c: &Command, m: &ArgMatches) -> CliResult<Settings> {
    let file = match m.get_one::<String>("config") {
        Some(p) => {
            let path = Path::new(p);
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            parse_config(&text, p)?
        }
        None => Vec::new(),
    };
    Settings::resolve(c.name, c.schema, &file, &flag_pairs(c, m))
}

/// Runs a resolved command under its output-directory lock.
pub fn execute(c: &Command, s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    init_logging(s.raw("log"));
    let _lock = match s.out() {
        Some(dir) => {
            let lock = lock::RunLock::acquire(&dir)?;
            let manifest = s.write_manifest(&dir)?;
            log::debug!("settings recorded in {}", manifest.display());
            Some(lock)
        }
        None => None,
    };
    (c.run)(s, out)
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let c = commands::find(name).expect("subcommands come from the table");
    let result = resolve(c, sub).and_then(|s| execute(c, &s, out));
    let _ = out.flush();
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("integscan {name}: error: {e}");
            e.exit_code()
        }
    }
}
