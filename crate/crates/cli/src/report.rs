//! Plot-ready CSV tables with a provenance sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// File stem of the emitted CSV, e.g. `sumrate-oma`.
    pub experiment: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub seed: u64,
    pub config_hash: String,
}

impl ExperimentReport {
    pub fn new(experiment: &str, header: &[&str], seed: u64, config_hash: &str) -> Self {
        Self {
            experiment: experiment.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            seed,
            config_hash: config_hash.into(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Rows whose `key` column equals `value`.
    pub fn filter<'a>(
        &'a self,
        key: &str,
        value: &'a str,
    ) -> impl Iterator<Item = &'a Vec<String>> + 'a {
        let c = self.column(key);
        self.rows
            .iter()
            .filter(move |r| c.is_some_and(|c| r[c] == value))
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("CSV fields are UTF-8"))
    }

    pub fn meta(&self) -> String {
        format!(
            "experiment = \"{}\"\nconfig_sha256 = \"{}\"\nseed = {}\nrows = {}\nddlink_core = \"{}\"\nddlink_cli = \"{}\"\n",
            self.experiment,
            self.config_hash,
            self.seed,
            self.rows.len(),
            ddlink_core::VERSION,
            env!("CARGO_PKG_VERSION"),
        )
    }
}

/// Writes `<experiment>.csv` and `<experiment>.meta` under `dir`.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<PathBuf, CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let csv_path = dir.join(format!("{}.csv", report.experiment));
    fs::write(&csv_path, report.to_csv()?).map_err(io)?;
    fs::write(
        dir.join(format!("{}.meta", report.experiment)),
        report.meta(),
    )
    .map_err(io)?;
    Ok(csv_path)
}

/// Shortest round-trip decimal form, so output is byte-stable.
pub fn num(v: f64) -> String {
    format!("{v}")
}
