//! Flat `key = value` run settings.
//!
//! Resolution order is schema default, then `--config` file, then flags.
//! Unknown keys are rejected. The resolved settings are written to
//! `<out>/integscan-run.conf` before a command runs, and that file can be fed
//! back through `--config` to repeat the run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, CliResult};

pub const RUN_MANIFEST: &str = "integscan-run.conf";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Text,
    Int,
    Float,
    Bool,
    /// Resolved to an absolute path so a run manifest works from any directory.
    Path,
    Choice(&'static [&'static str]),
}

#[derive(Clone, Copy, Debug)]
pub struct Key {
    pub name: &'static str,
    pub kind: Kind,
    /// `None` marks a required key; `Some("")` an optional one that is unset.
    pub default: Option<&'static str>,
    pub help: &'static str,
}

pub const fn key(name: &'static str, kind: Kind, default: Option<&'static str>, help: &'static str) -> Key {
    Key { name, kind, default, help }
}

pub const LOG_LEVELS: &[&str] = &["error", "warn", "info", "debug"];

/// Keys every command accepts.
pub const COMMON: &[Key] = &[
    key("seed", Kind::Int, Some("0"), "global seed"),
    key("log", Kind::Choice(LOG_LEVELS), Some("info"), "stderr verbosity"),
];

pub const OUT: Key = key("out", Kind::Path, None, "output directory");

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub command: String,
    values: BTreeMap<String, String>,
    order: Vec<&'static str>,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

/// Parses a config file body into ordered pairs; `#` starts a comment line.
pub fn parse_config(text: &str, origin: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected `key = value`, got {line:?}", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(CliError::Usage(format!("{origin}:{}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn check_value(key: &Key, value: &str, origin: &str) -> CliResult<String> {
    let bad = |what: &str| CliError::Usage(format!("{origin} {}: {what}, got {value:?}", key.name));
    if value.is_empty() {
        return if key.default.is_some_and(str::is_empty) { Ok(String::new()) } else { Err(bad("a value is required")) };
    }
    match key.kind {
        Kind::Text => {}
        Kind::Int => {
            value.parse::<u64>().map_err(|_| bad("expected a non-negative integer"))?;
        }
        Kind::Float => {
            let v = value.parse::<f64>().map_err(|_| bad("expected a number"))?;
            if !v.is_finite() {
                return Err(bad("expected a finite number"));
            }
        }
        Kind::Bool => {
            parse_bool(value).ok_or_else(|| bad("expected true or false"))?;
        }
        Kind::Path => {
            let p = Path::new(value);
            if p.is_relative() {
                let cwd = std::env::current_dir().map_err(|e| CliError::io(Path::new("."), e))?;
                return Ok(cwd.join(p).display().to_string());
            }
        }
        Kind::Choice(options) => {
            if !options.contains(&value) {
                return Err(bad(&format!("expected one of {}", options.join(", "))));
            }
        }
    }
    Ok(value.to_string())
}

impl Settings {
    /// `file` holds config-file pairs, `flags` command-line pairs.
    pub fn resolve(command: &str, schema: &[Key], file: &[(String, String)], flags: &[(String, String)]) -> CliResult<Self> {
        let all: Vec<&Key> = COMMON.iter().chain(schema).collect();
        let find = |k: &str| all.iter().find(|key| key.name == k).copied();
        let mut values = BTreeMap::new();
        for key in &all {
            if let Some(d) = key.default {
                values.insert(key.name.to_string(), if d.is_empty() { String::new() } else { check_value(key, d, "default")? });
            }
        }
        for (k, v) in file {
            if k == "command" {
                if v != command {
                    return Err(CliError::Usage(format!("config file is for `{v}`, not `{command}`")));
                }
                continue;
            }
            let key = find(k).ok_or_else(|| CliError::Usage(format!("unknown config key `{k}` for `{command}`")))?;
            values.insert(k.clone(), check_value(key, v, "config key")?);
        }
        for (k, v) in flags {
            let key = find(k).ok_or_else(|| CliError::Usage(format!("unknown flag --{}", k.replace('_', "-"))))?;
            values.insert(k.clone(), check_value(key, v, &format!("flag --{}", k.replace('_', "-")))?);
        }
        for key in &all {
            if !values.contains_key(key.name) {
                return Err(CliError::Usage(format!("missing required --{} (or `{}` in the config file)", key.name.replace('_', "-"), key.name)));
            }
        }
        Ok(Self { command: command.to_string(), values, order: all.iter().map(|k| k.name).collect() })
    }

    pub fn raw(&self, name: &str) -> &str {
        self.values.get(name).map(String::as_str).unwrap_or_else(|| panic!("`{name}` is not in the schema"))
    }

    pub fn is_set(&self, name: &str) -> bool {
        !self.raw(name).is_empty()
    }

    pub fn text(&self, name: &str) -> String {
        self.raw(name).to_string()
    }

    pub fn parsed<T: FromStr>(&self, name: &str) -> T {
        // Values were type-checked during resolution.
        self.raw(name).parse().unwrap_or_else(|_| panic!("`{name}` was validated"))
    }

    pub fn int(&self, name: &str) -> u64 {
        self.parsed(name)
    }

    pub fn usize(&self, name: &str) -> usize {
        self.parsed(name)
    }

    pub fn float(&self, name: &str) -> f64 {
        self.parsed(name)
    }

    pub fn flag(&self, name: &str) -> bool {
        parse_bool(self.raw(name)).expect("validated")
    }

    pub fn path(&self, name: &str) -> PathBuf {
        PathBuf::from(self.raw(name))
    }

    pub fn opt_path(&self, name: &str) -> Option<PathBuf> {
        self.is_set(name).then(|| self.path(name))
    }

    /// The output directory, when the command has one.
    pub fn out(&self) -> Option<PathBuf> {
        self.values.get("out").filter(|v| !v.is_empty()).map(PathBuf::from)
    }

    /// The run-manifest text: `command` first, then every key in schema order.
    pub fn render(&self) -> String {
        let mut s = String::from("# integscan run manifest; repeat with `integscan ");
        s.push_str(&self.command);
        s.push_str(" --config <this file>`\n");
        writeln!(s, "command = {}", self.command).unwrap();
        for k in &self.order {
            writeln!(s, "{k} = {}", self.values[*k]).unwrap();
        }
        s
    }

    pub fn write_manifest(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(RUN_MANIFEST);
        std::fs::write(&path, self.render()).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &[Key] = &[
        OUT,
        key("count", Kind::Int, Some("10"), ""),
        key("mode", Kind::Choice(&["a", "b"]), Some("a"), ""),
        key("resume", Kind::Path, Some(""), ""),
        key("rate", Kind::Float, Some("0.5"), ""),
    ];

    fn pairs(p: &[(&str, &str)]) -> Vec<(String, String)> {
        p.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let file = pairs(&[("count", "3"), ("mode", "b"), ("out", "/tmp/x")]);
        let s = Settings::resolve("t", SCHEMA, &file, &pairs(&[("count", "7")])).unwrap();
        assert_eq!((s.int("count"), s.text("mode"), s.float("rate")), (7, "b".to_string(), 0.5));
        assert!(!s.is_set("resume"));
        let again = Settings::resolve("t", SCHEMA, &parse_config(&s.render(), "m").unwrap(), &[]).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn rejections() {
        let out = pairs(&[("out", "/tmp/x")]);
        assert!(Settings::resolve("t", SCHEMA, &pairs(&[("bogus", "1")]), &out).is_err());
        assert!(Settings::resolve("t", SCHEMA, &[], &pairs(&[("out", "/x"), ("mode", "c")])).is_err());
        assert!(Settings::resolve("t", SCHEMA, &[], &pairs(&[("out", "/x"), ("count", "-1")])).is_err());
        assert!(Settings::resolve("t", SCHEMA, &pairs(&[("command", "other")]), &out).is_err());
        assert!(Settings::resolve("t", SCHEMA, &[], &[]).is_err());
        assert!(parse_config("just words", "f").is_err());
    }

    #[test]
    fn relative_paths_become_absolute() {
        let s = Settings::resolve("t", SCHEMA, &[], &pairs(&[("out", "rel/dir")])).unwrap();
        assert!(s.out().unwrap().is_absolute());
    }
}
