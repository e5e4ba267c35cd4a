//! CSV and JSON sidecar emission via temp file and rename.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::config::ExperimentConfig;
use crate::experiments::ResultTable;

#[derive(Debug, Serialize)]
pub struct Metadata<'a> {
    pub experiment: &'static str,
    pub version: String,
    pub seed: u64,
    pub workers: usize,
    pub config_hash: String,
    pub elapsed_seconds: f64,
    pub csv: String,
    pub columns: &'a [&'static str],
    pub rows: usize,
    pub config: &'a ExperimentConfig,
}

/// `results.csv` gets `results.csv.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".json");
    csv.with_file_name(name)
}

fn write_atomic(path: &Path, write: impl FnOnce(&mut NamedTempFile) -> io::Result<()>) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    write(&mut tmp)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn csv_bytes(table: &ResultTable) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

pub fn write_csv(path: &Path, table: &ResultTable) -> io::Result<()> {
    let bytes = csv_bytes(table)?;
    write_atomic(path, |f| f.write_all(&bytes))
}

pub fn write_metadata(path: &Path, meta: &Metadata<'_>) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(meta).map_err(io::Error::other)?;
    text.push('\n');
    write_atomic(path, |f| f.write_all(text.as_bytes()))
}
