//! Metrics CSV.

use std::path::{Path, PathBuf};

use super::atomic_write;
use crate::engine::MetricsRecord;
use crate::error::{Result, SimError};

pub fn metrics_header(n_c: usize) -> Vec<String> {
    let mut h: Vec<String> = ["step", "alive_fraction", "total_energy", "mean_energy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=n_c).map(|k| format!("chem_total_{k}")));
    h.push("species_proxy".into());
    h.push("ms_per_step".into());
    h
}

fn row(r: &MetricsRecord, n_c: usize) -> Vec<String> {
    let mut v = vec![
        r.step.to_string(),
        r.alive_fraction.to_string(),
        r.total_energy.to_string(),
        r.mean_energy.to_string(),
    ];
    v.extend((0..n_c).map(|k| r.chem_totals.get(k).copied().unwrap_or(0.0).to_string()));
    v.push(r.species_proxy.to_string());
    v.push(format!("{:.4}", r.ms_per_step));
    v
}

/// Buffers rows in memory; every flush rewrites the file atomically, so the
/// file on disk always holds a complete prefix of the series.
pub struct MetricsWriter {
    path: PathBuf,
    n_c: usize,
    csv: csv::Writer<Vec<u8>>,
    rows: usize,
}

impl MetricsWriter {
    pub fn new(path: impl Into<PathBuf>, n_c: usize) -> Result<Self> {
        let path = path.into();
        let mut csv = csv::Writer::from_writer(Vec::new());
        csv.write_record(metrics_header(n_c))
            .map_err(|e| SimError::Encode(e.to_string()))?;
        Ok(Self {
            path,
            n_c,
            csv,
            rows: 0,
        })
    }

    pub fn push(&mut self, r: &MetricsRecord) -> Result<()> {
        self.rows += 1;
        self.csv
            .write_record(row(r, self.n_c))
            .map_err(|e| SimError::Encode(e.to_string()))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn flush(&mut self) -> Result<()> {
        self.csv
            .flush()
            .map_err(|e| SimError::io(&self.path, None, e))?;
        atomic_write(&self.path, self.csv.get_ref(), None)
    }
}

/// Writes `records` as a complete CSV file.
pub fn export_metrics(records: &[MetricsRecord], n_c: usize, path: &Path) -> Result<()> {
    let mut w = MetricsWriter::new(path, n_c)?;
    for r in records {
        w.push(r)?;
    }
    w.flush()
}
