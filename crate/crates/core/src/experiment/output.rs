//! CSV tables and the JSON run summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;

/// A result table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem before `-{N}-{seed}`, e.g. `rigidity` or `rigidity-summary`.
    pub name: String,
    pub n: usize,
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, n: usize, header: &'static [&'static str]) -> Self {
        Self {
            name: name.into(),
            n,
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn file_name(&self, seed: u64) -> String {
        format!("{}-{}-{}.csv", self.name, self.n, seed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Float cell with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn int(v: impl ToString) -> String {
    v.to_string()
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Index list as space-separated labels.
pub fn labels(v: &[usize]) -> String {
    v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

/// One θ-grid point with its domain flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAnnotation {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "E")]
    pub e: f64,
    pub eta: f64,
    #[serde(rename = "in_domain_S")]
    pub in_domain_s: bool,
    /// `Nη/|√θ|`.
    pub scale_ratio: f64,
    pub above_threshold: bool,
}

/// Seeds that regenerate one `(N, replica)` pair in isolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSeeds {
    #[serde(rename = "N")]
    pub n: usize,
    /// Master seed of this `N`; replica `i` uses `replica_seed(size_seed, i)`.
    pub size_seed: u64,
    pub replica_seeds: Vec<u64>,
}

/// Contents of `{kind}-{seed}.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub version: String,
    pub started_unix_seconds: f64,
    pub wall_clock_seconds: f64,
    /// Constants in effect, by statistic, including defaults.
    pub calibration: std::collections::BTreeMap<String, f64>,
    pub grid: Vec<GridAnnotation>,
    pub seeds: Vec<ReplicaSeeds>,
    pub files: Vec<String>,
    pub violations: Vec<serde_json::Value>,
}

impl RunSummary {
    pub fn file_name(&self) -> String {
        format!("{}-{}.json", self.config.kind, self.config.seed)
    }
}

/// Writes every table and the summary into `dir`, creating it if needed.
pub fn emit_results(tables: &[Table], summary: &RunSummary, dir: &Path) -> Result<Vec<PathBuf>> {
    if tables.is_empty() {
        return Err(Error::invalid("no result tables to write"));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(tables.len() + 1);
    for t in tables {
        let path = dir.join(t.file_name(summary.config.seed));
        fs::write(&path, t.to_csv())?;
        written.push(path);
    }
    let path = dir.join(summary.file_name());
    fs::write(&path, serde_json::to_string_pretty(summary)?)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new("demo", 8, &["a", "b"]);
        t.push(vec![int(1), num(0.5)]);
        assert_eq!(t.to_csv(), "a,b\n1,5.0000000000000000e-1\n");
        assert_eq!(t.file_name(3), "demo-8-3.csv");
    }
}
