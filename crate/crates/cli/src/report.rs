//! Report document, verdict bookkeeping and atomic file output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Inconclusive,
    Fail,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Inconclusive => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictLine {
    pub section: String,
    pub check: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact: String,
    pub version: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub subcommand: String,
    pub provenance: Provenance,
    pub config_echo: RunConfig,
    /// Structured results keyed by section name.
    pub sections: BTreeMap<String, Value>,
    pub verdicts: Vec<VerdictLine>,
    pub status: Status,
    pub exit_code: i32,
    /// CSV files written next to the report, relative to the output directory.
    pub files: Vec<String>,
}

impl Report {
    pub fn new(subcommand: &str, config: &RunConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            subcommand: subcommand.to_string(),
            provenance: Provenance {
                artifact: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: config.seed,
            },
            config_echo: config.clone(),
            sections: BTreeMap::new(),
            verdicts: Vec::new(),
            status: Status::Pass,
            exit_code: 0,
            files: Vec::new(),
        }
    }

    pub fn verdict(&mut self, section: &str, check: impl Into<String>, status: Status, detail: impl Into<String>) {
        self.verdicts.push(VerdictLine { section: section.into(), check: check.into(), status, detail: detail.into() });
    }

    /// Fail beats inconclusive beats pass.
    pub fn finish(&mut self) {
        self.status = self.verdicts.iter().map(|v| v.status).max().unwrap_or(Status::Pass);
        self.exit_code = self.status.exit_code();
    }
}

/// Writes through a temporary file in the target directory, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// CSV with a header row; floats use Rust's shortest round-trip formatting.
pub fn csv_bytes<R: Serialize>(rows: &[R]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow::anyhow!("csv flush: {e}"))?)
}
