//! Append-only JSONL manifest of sweep outcomes.
//!
//! Each line is one [`ManifestEntry`]. Writers take an exclusive lock on the
//! manifest file, so several processes may share one output directory. The
//! latest line for a key wins.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use z2sim_core::ResultRecord;

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub key: String,
    pub status: Status,
    /// Record file name relative to the output directory.
    pub file: Option<String>,
    pub error: Option<String>,
    pub n: usize,
    pub beta_h: f64,
    pub dt: f64,
    pub epsilon2: f64,
    pub zeta: f64,
    pub wall_time_s: f64,
    pub memory_estimate: u64,
    pub peak_rss_bytes: Option<u64>,
}

pub struct Manifest {
    dir: PathBuf,
    path: PathBuf,
}

impl Manifest {
    pub fn open(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            path: dir.join(MANIFEST_NAME),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&self, entry: &ManifestEntry) -> CliResult<()> {
        let mut line = serde_json::to_string(entry)?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.lock()?;
        let res = f.write_all(line.as_bytes()).and_then(|_| f.sync_data());
        f.unlock()?;
        Ok(res?)
    }

    pub fn entries(&self) -> CliResult<Vec<ManifestEntry>> {
        let f = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        f.lock_shared()?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(&f).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line)
                .map_err(|e| CliError::Failure(format!("{} line {}: {e}", self.path.display(), i + 1)))?;
            out.push(entry);
        }
        f.unlock()?;
        Ok(out)
    }

    /// Latest entry per key.
    pub fn latest(&self) -> CliResult<BTreeMap<String, ManifestEntry>> {
        Ok(self.entries()?.into_iter().map(|e| (e.key.clone(), e)).collect())
    }
}

/// `<16 hex digits>.json`, as written by the run commands.
fn is_record_name(name: &str) -> bool {
    name.strip_suffix(".json")
        .is_some_and(|stem| stem.len() == 16 && stem.bytes().all(|b| b.is_ascii_hexdigit()))
}

/// Result of checking a manifest against the directory it describes.
#[derive(Debug, Default)]
pub struct FsckReport {
    pub checked: usize,
    pub failed_entries: usize,
    pub problems: Vec<String>,
}

impl FsckReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Every `done` entry must point at a readable record with a matching key,
/// and every record in the directory must be listed.
pub fn fsck(dir: &Path) -> CliResult<FsckReport> {
    let manifest = Manifest::open(dir)?;
    let latest = manifest.latest()?;
    let mut report = FsckReport::default();
    let mut listed = std::collections::BTreeSet::new();
    for (key, entry) in &latest {
        match entry.status {
            Status::Failed => report.failed_entries += 1,
            Status::Done => {
                report.checked += 1;
                let Some(file) = &entry.file else {
                    report.problems.push(format!("{key}: done entry without a file"));
                    continue;
                };
                listed.insert(file.clone());
                let path = dir.join(file);
                let text = match std::fs::read_to_string(&path) {
                    Ok(t) => t,
                    Err(e) => {
                        report.problems.push(format!("{key}: {file}: {e}"));
                        continue;
                    }
                };
                match ResultRecord::from_json(&text) {
                    Ok(r) if crate::run::content_key(&r) == *key => {}
                    Ok(_) => report.problems.push(format!("{key}: {file} holds a different run")),
                    Err(e) => report.problems.push(format!("{key}: {file}: {e}")),
                }
            }
        }
    }
    for item in std::fs::read_dir(dir)? {
        let name = item?.file_name().to_string_lossy().into_owned();
        if is_record_name(&name) && !listed.contains(&name) {
            report.problems.push(format!("{name}: record not in manifest"));
        }
    }
    Ok(report)
}
