//! Line-delimited JSON fixtures: one `{hash, request, response, ...}` per line.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChatRecord, ChatRequest, TokenUsage};
use crate::data::DataError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub hash: String,
    pub request: ChatRequest,
    pub response: String,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default)]
    pub usage: TokenUsage,
}

impl From<&ChatRecord> for FixtureEntry {
    fn from(r: &ChatRecord) -> Self {
        Self {
            hash: r.request.canonical_hash(),
            request: r.request.clone(),
            response: r.response_text.clone(),
            latency_ms: r.latency_ms,
            usage: r.usage,
        }
    }
}

pub fn write_fixture<W: Write>(mut out: W, records: &[ChatRecord]) -> std::io::Result<()> {
    for r in records {
        let line = serde_json::to_string(&FixtureEntry::from(r)).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    out.flush()
}

/// Writes every record of a session to `path`, keyed by canonical hash.
pub fn record_fixture(path: &Path, records: &[ChatRecord]) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let file = std::fs::File::create(path)?;
    write_fixture(std::io::BufWriter::new(file), records)
}

pub fn read_fixture(path: &Path) -> Result<Vec<FixtureEntry>, DataError> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: name.clone(),
        source,
    })?;
    parse_fixture(BufReader::new(file), &name)
}

pub(crate) fn parse_fixture<R: BufRead>(reader: R, name: &str) -> Result<Vec<FixtureEntry>, DataError> {
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DataError::Io {
            path: name.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: FixtureEntry = serde_json::from_str(&line)
            .map_err(|e| DataError::invalid(name, format!("line {}: {e}", i + 1)))?;
        if entry.hash != entry.request.canonical_hash() {
            return Err(DataError::invalid(
                name,
                format!("line {}: hash does not match request", i + 1),
            ));
        }
        entries.push(entry);
    }
    Ok(entries)
}
