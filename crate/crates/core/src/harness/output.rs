//! Sweep CSV and run manifest.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::sweep::SweepRow;
use crate::Result;

/// Bumped whenever the CSV columns change.
pub const CSV_SCHEMA: &str = "msense-sweep-csv/1";

pub const CSV_HEADER: [&str; 13] = [
    "axis_value",
    "n_saps",
    "filter",
    "p_det",
    "ci_lo",
    "ci_hi",
    "precision",
    "f1",
    "p_occ",
    "drops",
    "positives",
    "detections",
    "true_positives",
];

pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(CSV_HEADER)?;
        writer.flush()?;
        Ok(Self { writer })
    }

    pub fn write_row(&mut self, r: &SweepRow) -> Result<()> {
        let f = |v: f64| format!("{v:.6}");
        self.writer.write_record([
            r.axis_value.to_string(),
            r.n_saps.to_string(),
            r.filter.to_string(),
            f(r.p_det),
            f(r.ci_lo),
            f(r.ci_hi),
            f(r.precision),
            f(r.f1),
            f(r.p_occ),
            r.drops.to_string(),
            r.counts.positives.to_string(),
            r.counts.detections.to_string(),
            r.counts.true_positives.to_string(),
        ])?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer.into_inner().map_err(|e| crate::Error::Io(e.into_error()))
    }
}

pub fn rows_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut sink = CsvSink::new(Vec::new())?;
    for r in rows {
        sink.write_row(r)?;
    }
    Ok(String::from_utf8(sink.into_inner()?).expect("CSV is UTF-8"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub csv_schema: String,
    pub code_version: String,
    pub command: String,
    pub axis: Option<String>,
    pub values: Vec<f64>,
    pub drops_per_point: usize,
    pub root_seed: u64,
    pub sap_counts: Vec<usize>,
    pub config: SimConfig,
}

impl Manifest {
    pub fn new(command: &str, config: &SimConfig, root_seed: u64) -> Self {
        Self {
            csv_schema: CSV_SCHEMA.into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            axis: None,
            values: Vec::new(),
            drops_per_point: 0,
            root_seed,
            sap_counts: Vec::new(),
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
