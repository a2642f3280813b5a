//! Corpus manifest: CSV with header `path,label`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AudioError;
use crate::SnoreClass;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: SnoreClass,
}

pub fn parse_manifest(reader: impl Read) -> Result<Vec<ManifestEntry>, AudioError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| AudioError::Manifest(e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "path" || &headers[1] != "label" {
        return Err(AudioError::Manifest(format!(
            "expected header `path,label`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| AudioError::Manifest(e.to_string()))?;
        if record.len() != 2 {
            return Err(AudioError::Manifest(format!("row {}: expected 2 fields", line + 2)));
        }
        let label =
            record[1].parse::<SnoreClass>().map_err(|e| AudioError::Manifest(format!("row {}: {e}", line + 2)))?;
        if record[0].is_empty() {
            return Err(AudioError::Manifest(format!("row {}: empty path", line + 2)));
        }
        out.push(ManifestEntry { path: PathBuf::from(&record[0]), label });
    }
    Ok(out)
}

/// Reads a manifest file; relative paths are resolved against its directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, AudioError> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let entries = parse_manifest(File::open(path)?)?;
    Ok(entries
        .into_iter()
        .map(|e| ManifestEntry { path: if e.path.is_relative() { base.join(&e.path) } else { e.path }, label: e.label })
        .collect())
}

pub fn write_manifest(writer: impl Write, entries: &[ManifestEntry]) -> Result<(), AudioError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["path", "label"]).map_err(|e| AudioError::Manifest(e.to_string()))?;
    for e in entries {
        w.write_record([e.path.to_string_lossy().as_ref(), e.label.as_str()])
            .map_err(|e| AudioError::Manifest(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
