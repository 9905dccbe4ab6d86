//! JSON Lines manifest of generated records.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::transform::Transform;
use crate::{Modality, Split, Task};

/// One forged sample. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForgeryRecord {
    pub id: String,
    pub task: Task,
    pub modality: Modality,
    pub pristine_path: String,
    pub forged_path: String,
    pub mask_path: String,
    /// External duplication only.
    pub donor_path: Option<String>,
    /// External duplication only: the region taken from the donor.
    pub donor_mask_path: Option<String>,
    pub seed: u64,
    pub transform: Transform,
    pub split: Split,
}

impl ForgeryRecord {
    /// Every path the record references, resolved against `base`.
    pub fn files(&self, base: &Path) -> Vec<PathBuf> {
        let mut out = vec![base.join(&self.pristine_path), base.join(&self.forged_path), base.join(&self.mask_path)];
        out.extend(self.donor_path.iter().chain(&self.donor_mask_path).map(|p| base.join(p)));
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("record `{}`: {m}", self.id)));
        if self.id.is_empty() {
            return bad("empty id".into());
        }
        let is_edd = self.task == Task::Edd;
        if is_edd != self.donor_path.is_some() || is_edd != self.donor_mask_path.is_some() {
            return bad("donor paths must be present exactly for edd records".into());
        }
        for p in [&self.pristine_path, &self.forged_path, &self.mask_path] {
            if p.is_empty() || Path::new(p).is_absolute() {
                return bad(format!("path `{p}` must be non-empty and relative"));
            }
        }
        Ok(())
    }
}

/// Writes one JSON object per line, replacing any existing file.
pub fn write_manifest(records: &[ForgeryRecord], path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    for r in records {
        r.validate()?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))?;
    Ok(records.len())
}

/// Parses a manifest; blank lines are skipped.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ForgeryRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ForgeryRecord = serde_json::from_str(&line).map_err(|e| Error::Manifest { line: n + 1, detail: e.to_string() })?;
        rec.validate().map_err(|e| Error::Manifest { line: n + 1, detail: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}
