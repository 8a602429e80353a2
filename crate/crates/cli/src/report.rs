//! Report assembly and atomic artifact output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::baselines::BaselineCheck;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Versions {
    pub schema: u32,
    pub kimura_core: &'static str,
    pub kimura_cli: &'static str,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            kimura_core: kimura_core::VERSION,
            kimura_cli: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// The resolved configuration echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub jobs: Option<usize>,
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub config: ResolvedConfig,
    pub results: Value,
    /// None for report-only commands.
    pub pass: Option<bool>,
    pub baselines: Vec<BaselineCheck>,
    pub versions: Versions,
}

/// A numeric table written as CSV with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> std::io::Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_number(*v)))?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }
}

/// Shortest round-tripping decimal, switching to exponent form for very
/// small or large magnitudes.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// Everything a command produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub results: Value,
    pub pass: Option<bool>,
    pub baselines: Vec<BaselineCheck>,
    pub tables: Vec<Table>,
    /// Extra files (name, contents).
    pub files: Vec<(String, String)>,
}

impl Outcome {
    pub fn new(results: Value, pass: Option<bool>) -> Self {
        Self {
            results,
            pass,
            baselines: Vec::new(),
            tables: Vec::new(),
            files: Vec::new(),
        }
    }
}

/// Write `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Writes the artifacts and then the report into `dir`; returns the report path.
pub fn write_outputs(dir: &Path, report: &Report, outcome: &Outcome) -> std::io::Result<PathBuf> {
    for table in &outcome.tables {
        write_atomic(&dir.join(format!("{}.csv", table.name)), &table.to_csv()?)?;
    }
    for (name, text) in &outcome.files {
        write_atomic(&dir.join(name), text.as_bytes())?;
    }
    let mut json = serde_json::to_vec_pretty(report).map_err(std::io::Error::other)?;
    json.push(b'\n');
    let path = dir.join("report.json");
    write_atomic(&path, &json)?;
    Ok(path)
}
