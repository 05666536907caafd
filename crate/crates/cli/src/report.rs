//! Experiment reports: per-replicate metric rows plus aggregates, persisted
//! as CSV (long format) or a single JSON document, written atomically.

use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::config::OutputFormat;
use crate::HarnessError;

/// Slack below this is a violation on precondition-satisfying replicates.
pub const VIOLATION_TOL: f64 = -1e-10;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportRow {
    pub replicate: usize,
    pub seed: u64,
    /// Grid coordinate label, e.g. `d=400`.
    pub grid_point: String,
    pub precondition_failed: bool,
    pub metrics: IndexMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub base_seed: u64,
    pub replicates: usize,
    pub violation_count: usize,
    pub rows: Vec<ReportRow>,
    pub aggregates: IndexMap<String, f64>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, base_seed: u64, replicates: usize) -> Self {
        Self {
            experiment: experiment.into(),
            base_seed,
            replicates,
            violation_count: 0,
            rows: Vec::new(),
            aggregates: IndexMap::new(),
        }
    }

    /// Finishes assembly: records the violation count as an aggregate too.
    pub fn seal(&mut self) {
        self.aggregates
            .insert("violation_count".into(), self.violation_count as f64);
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::WriterBuilder::new()
            .quote_style(csv::QuoteStyle::Necessary)
            .from_writer(Vec::new());
        w.write_record([
            "kind",
            "grid_point",
            "replicate",
            "seed",
            "precondition_failed",
            "metric",
            "value",
        ])
        .map_err(csv_err)?;
        let meta = [
            ("experiment", self.experiment.clone()),
            ("base_seed", self.base_seed.to_string()),
            ("replicates", self.replicates.to_string()),
        ];
        for (name, value) in meta {
            w.write_record(["meta", "", "", "", "", name, &value])
                .map_err(csv_err)?;
        }
        for row in &self.rows {
            for (metric, value) in &row.metrics {
                w.write_record([
                    "replicate",
                    &row.grid_point,
                    &row.replicate.to_string(),
                    &row.seed.to_string(),
                    if row.precondition_failed { "1" } else { "0" },
                    metric,
                    &format_value(*value),
                ])
                .map_err(csv_err)?;
            }
        }
        for (name, value) in &self.aggregates {
            w.write_record(["aggregate", "", "", "", "", name, &format_value(*value)])
                .map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| HarnessError::Report(format!("csv flush: {e}")))?;
        String::from_utf8(bytes).map_err(|e| HarnessError::Report(format!("csv encoding: {e}")))
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        serde_json::to_string_pretty(self)
            .map_err(|e| HarnessError::Report(format!("json serialization: {e}")))
    }

    /// Parses a CSV produced by [`Self::to_csv`] back into a report.
    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let mut report = ExperimentReport::new("", 0, 0);
        let mut current: Option<ReportRow> = None;
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            let get = |i: usize| record.get(i).unwrap_or("").to_string();
            match record.get(0) {
                Some("meta") => match record.get(5) {
                    Some("experiment") => report.experiment = get(6),
                    Some("base_seed") => {
                        report.base_seed = get(6).parse().map_err(parse_err)?;
                    }
                    Some("replicates") => {
                        report.replicates = get(6).parse().map_err(parse_err)?;
                    }
                    other => {
                        return Err(HarnessError::Report(format!(
                            "unknown meta field {other:?}"
                        )))
                    }
                },
                Some("replicate") => {
                    let replicate: usize = get(2).parse().map_err(parse_err)?;
                    let seed: u64 = get(3).parse().map_err(parse_err)?;
                    let grid_point = get(1);
                    let matches_current = current.as_ref().is_some_and(|row| {
                        row.replicate == replicate && row.grid_point == grid_point
                    });
                    if !matches_current {
                        if let Some(done) = current.take() {
                            report.rows.push(done);
                        }
                        current = Some(ReportRow {
                            replicate,
                            seed,
                            grid_point,
                            precondition_failed: get(4) == "1",
                            metrics: IndexMap::new(),
                        });
                    }
                    current
                        .as_mut()
                        .expect("row in progress")
                        .metrics
                        .insert(get(5), get(6).parse().map_err(parse_err)?);
                }
                Some("aggregate") => {
                    report
                        .aggregates
                        .insert(get(5), get(6).parse().map_err(parse_err)?);
                }
                other => {
                    return Err(HarnessError::Report(format!("unknown row kind {other:?}")))
                }
            }
        }
        if let Some(done) = current.take() {
            report.rows.push(done);
        }
        report.violation_count = report
            .aggregates
            .get("violation_count")
            .map(|&v| v as usize)
            .unwrap_or(0);
        Ok(report)
    }

    pub fn render(&self, format: OutputFormat) -> Result<String, HarnessError> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }

    /// Writes the rendered report atomically (temp file then rename).
    pub fn write(&self, format: OutputFormat, path: &Path) -> Result<(), HarnessError> {
        let rendered = self.render(format)?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
        let mut tmp = match dir {
            Some(d) => tempfile::NamedTempFile::new_in(d),
            None => tempfile::NamedTempFile::new(),
        }
        .map_err(|e| io_err(path, &e))?;
        tmp.write_all(rendered.as_bytes())
            .map_err(|e| io_err(path, &e))?;
        tmp.persist(path)
            .map_err(|e| HarnessError::Report(format!("persist {}: {e}", path.display())))?;
        Ok(())
    }

    /// Median of one metric over precondition-satisfying rows at a grid
    /// point.
    pub fn median_metric(&self, grid_point: &str, metric: &str) -> Option<f64> {
        let mut values: Vec<f64> = self
            .rows
            .iter()
            .filter(|row| row.grid_point == grid_point && !row.precondition_failed)
            .filter_map(|row| row.metrics.get(metric).copied())
            .collect();
        if values.is_empty() {
            return None;
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = values.len() / 2;
        Some(if values.len() % 2 == 1 {
            values[mid]
        } else {
            0.5 * (values[mid - 1] + values[mid])
        })
    }
}

/// 17 significant digits, enough to round-trip any f64.
fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Report(format!("csv: {e}"))
}

fn parse_err<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Report(format!("csv value parse: {e}"))
}

fn io_err(path: &Path, e: &std::io::Error) -> HarnessError {
    HarnessError::Report(format!("write {}: {e}", path.display()))
}

/// Least-squares slope of `ln(y)` against `ln(x)`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> ExperimentReport {
        let mut report = ExperimentReport::new("norm_suite", 42, 2);
        for replicate in 0..2 {
            let mut metrics = IndexMap::new();
            metrics.insert("slack".into(), 0.5 + replicate as f64);
            metrics.insert("ratio".into(), 0.125);
            report.rows.push(ReportRow {
                replicate,
                seed: 100 + replicate as u64,
                grid_point: format!("d={}", 100 * (replicate + 1)),
                precondition_failed: false,
                metrics,
            });
        }
        report.aggregates.insert("slope".into(), -0.5);
        report.seal();
        report
    }

    #[test]
    fn csv_round_trip_preserves_everything() {
        let report = sample_report();
        let text = report.to_csv().unwrap();
        let back = ExperimentReport::from_csv(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn empty_report_is_header_and_meta_only() {
        let mut report = ExperimentReport::new("entrywise", 1, 0);
        report.seal();
        let text = report.to_csv().unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "kind,grid_point,replicate,seed,precondition_failed,metric,value"
        );
        // meta x3 + violation_count aggregate
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn json_round_trip() {
        let report = sample_report();
        let text = report.to_json().unwrap();
        let back: ExperimentReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn atomic_write_and_reread() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let report = sample_report();
        report.write(OutputFormat::Csv, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back = ExperimentReport::from_csv(&text).unwrap();
        assert_eq!(back.aggregates, report.aggregates);
        // Rewriting in place succeeds and stays parseable.
        report.write(OutputFormat::Csv, &path).unwrap();
        assert!(ExperimentReport::from_csv(&std::fs::read_to_string(&path).unwrap()).is_ok());
    }

    #[test]
    fn median_over_checked_rows() {
        let mut report = sample_report();
        assert_eq!(report.median_metric("d=100", "slack"), Some(0.5));
        report.rows[0].precondition_failed = true;
        assert_eq!(report.median_metric("d=100", "slack"), None);
    }

    #[test]
    fn slope_fits_exact_power_law() {
        let points: Vec<(f64, f64)> = [100.0f64, 400.0, 1600.0]
            .iter()
            .map(|&d| (d, 3.0 * d.powf(-0.5)))
            .collect();
        let slope = log_log_slope(&points).unwrap();
        assert!((slope + 0.5).abs() < 1e-12);
        assert!(log_log_slope(&points[..1]).is_none());
    }

    #[test]
    fn values_round_trip_at_full_precision() {
        let mut report = ExperimentReport::new("x", 0, 1);
        let tricky = std::f64::consts::PI * 1e-7;
        let mut metrics = IndexMap::new();
        metrics.insert("v".into(), tricky);
        report.rows.push(ReportRow {
            replicate: 0,
            seed: 0,
            grid_point: "g".into(),
            precondition_failed: false,
            metrics,
        });
        report.seal();
        let back = ExperimentReport::from_csv(&report.to_csv().unwrap()).unwrap();
        assert_eq!(back.rows[0].metrics["v"], tricky);
    }
}
