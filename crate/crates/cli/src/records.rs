//! NDJSON run records and the distribution oracle sidecar.
//!
//! A record file holds one JSON object per line. The oracle for a record
//! file at `p` lives at `p.oracle.json` and stores what the run was
//! targeting (stationary distributions and gaps), so summaries can score
//! accuracy without recomputing chains.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// One emitted sample row. Rows from the same `(trial, step)` group share
/// `method`, `failed`, `delta`, and `n`; the group's cost is carried on its
/// first row and zero on the rest, so summing within a group is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub step: u64,
    pub trial: u64,
    pub sample: usize,
    pub method: String,
    pub walk_calls: u64,
    pub diffusion_calls: u64,
    pub failed: bool,
    pub delta: f64,
    pub n: usize,
}

/// Target data for one step (protocol mode) or one family member
/// (scaling mode). `pi` is empty when the mode has no target distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleStep {
    pub step: u64,
    pub n: usize,
    pub delta: f64,
    pub pi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub mode: String,
    pub steps: Vec<OracleStep>,
}

pub fn to_ndjson(records: &[Record]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_ndjson(text: &str) -> Result<Vec<Record>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(idx, line)| {
            serde_json::from_str(line).map_err(|e| format!("line {}: {e}", idx + 1))
        })
        .collect()
}

pub fn write_records(path: &Path, records: &[Record]) -> std::io::Result<()> {
    std::fs::write(path, to_ndjson(records))
}

pub fn read_records(path: &Path) -> Result<Vec<Record>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_ndjson(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn oracle_path(records_path: &Path) -> PathBuf {
    let mut name = records_path.file_name().unwrap_or_default().to_os_string();
    name.push(".oracle.json");
    records_path.with_file_name(name)
}

pub fn write_oracle(records_path: &Path, oracle: &Oracle) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(oracle).expect("oracle serializes");
    std::fs::write(oracle_path(records_path), text)
}

/// The oracle next to `records_path`, if one exists.
pub fn read_oracle(records_path: &Path) -> Result<Option<Oracle>, String> {
    let path = oracle_path(records_path);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| format!("{}: {e}", path.display()))
}
