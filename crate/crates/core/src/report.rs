//! Deterministic result writers: CSV tables plus JSON sidecars.
//!
//! Every writer streams rows in a fixed column order and formats floats via
//! the shortest round-trip representation, so identical inputs always
//! produce identical bytes regardless of platform or thread count.

use crate::experiment::{RateReport, RateRow};
use crate::generator::{DynkinReport, TrotterReport};
use crate::suite::SuiteReport;
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv write failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("json encode failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// One simulation observation: a statistic of the empirical measure at a
/// step boundary of one replication.
#[derive(Debug, Clone, Serialize)]
pub struct SnapshotRow {
    pub replication: u64,
    pub time: f64,
    pub statistic_id: String,
    pub value: f64,
}

/// One diagnostic verdict (martingale residual or semigroup-splitting gap).
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticRow {
    pub diagnostic_id: String,
    #[serde(rename = "N")]
    pub particles: usize,
    pub t: f64,
    pub value: f64,
    pub std_error: f64,
    pub bound: f64,
    pub pass: bool,
}

impl DiagnosticRow {
    /// Row for a martingale-identity run: the residual must sit within
    /// three standard errors plus the discretization-bias budget.
    pub fn from_dynkin(id: &str, particles: usize, t: f64, report: &DynkinReport) -> Self {
        let bound = 3.0 * report.std_error + report.bias_budget;
        Self {
            diagnostic_id: id.to_string(),
            particles,
            t,
            value: report.residual,
            std_error: report.std_error,
            bound,
            pass: report.residual.abs() <= bound,
        }
    }

    /// Row for a semigroup-splitting comparison: both sides must agree
    /// within three combined standard errors.
    pub fn from_trotter(id: &str, particles: usize, t: f64, report: &TrotterReport) -> Self {
        let std_error = report
            .lhs_std_error
            .hypot(report.rhs_std_error);
        Self {
            diagnostic_id: id.to_string(),
            particles,
            t,
            value: report.lhs - report.rhs,
            std_error,
            bound: 3.0 * std_error,
            pass: report.agrees(3.0),
        }
    }
}

/// Serialized face of [`RateRow`] with the canonical column names.
#[derive(Debug, Serialize)]
struct RateCsvRow {
    #[serde(rename = "N")]
    particles: usize,
    weak_error: f64,
    std_error: f64,
    scaled_error: f64,
}

/// One property-check instance from a batch suite.
#[derive(Debug, Serialize)]
struct CheckCsvRow<'a> {
    suite: &'a str,
    case: &'a str,
    value: f64,
    bound: f64,
    pass: bool,
}

/// One generator-gap evaluation at a particle count.
#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    #[serde(rename = "N")]
    pub particles: usize,
    pub gen_diff: f64,
    /// |gen_diff| · √N.
    pub scaled_gen_diff: f64,
}

fn write_rows<W: Write, R: Serialize>(
    writer: W,
    rows: impl IntoIterator<Item = R>,
) -> Result<(), ReportError> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    for row in rows {
        csv_writer.serialize(row)?;
    }
    csv_writer.flush()?;
    Ok(())
}

/// Writes observation snapshots: (replication, time, statistic_id, value).
pub fn write_snapshots<W: Write>(writer: W, rows: &[SnapshotRow]) -> Result<(), ReportError> {
    write_rows(writer, rows.iter().cloned())
}

/// Writes diagnostic verdicts: (diagnostic_id, N, t, value, std_error,
/// bound, pass).
pub fn write_diagnostics<W: Write>(writer: W, rows: &[DiagnosticRow]) -> Result<(), ReportError> {
    write_rows(writer, rows.iter().cloned())
}

/// Writes the rate table: (N, weak_error, std_error, scaled_error).
pub fn write_rate_rows<W: Write>(writer: W, rows: &[RateRow]) -> Result<(), ReportError> {
    write_rows(
        writer,
        rows.iter().map(|row| RateCsvRow {
            particles: row.particles,
            weak_error: row.weak_error,
            std_error: row.std_error,
            scaled_error: row.scaled_error,
        }),
    )
}

/// Writes the generator-gap table: (N, gen_diff, scaled_gen_diff).
pub fn write_gap_rows<W: Write>(writer: W, rows: &[GapRow]) -> Result<(), ReportError> {
    write_rows(writer, rows.iter().cloned())
}

/// Writes suite outcomes, one row per property instance.
pub fn write_check_rows<W: Write>(writer: W, report: &SuiteReport) -> Result<(), ReportError> {
    write_rows(
        writer,
        report.rows.iter().map(|row| CheckCsvRow {
            suite: &report.name,
            case: &row.case,
            value: row.value,
            bound: row.bound,
            pass: row.pass,
        }),
    )
}

/// Sidecar payload accompanying the rate CSV: the slope fit, the band of
/// rescaled errors, the reference value, and an echo of the run
/// configuration.
#[derive(Debug, Serialize)]
pub struct RateSidecar<'a> {
    pub slope: Option<f64>,
    pub slope_std_error: Option<f64>,
    pub intercept: Option<f64>,
    pub rows_used: usize,
    pub band_max: f64,
    pub band_min: f64,
    pub reference: f64,
    pub reference_std_error: f64,
    pub config: &'a serde_json::Value,
}

impl<'a> RateSidecar<'a> {
    pub fn new(report: &RateReport, config: &'a serde_json::Value) -> Self {
        Self {
            slope: report.fit.as_ref().map(|f| f.slope),
            slope_std_error: report.fit.as_ref().map(|f| f.slope_std_error),
            intercept: report.fit.as_ref().map(|f| f.intercept),
            rows_used: report.fit.as_ref().map_or(0, |f| f.rows_used),
            band_max: report.band_max,
            band_min: report.band_min,
            reference: report.reference,
            reference_std_error: report.reference_std_error,
            config,
        }
    }
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    /// Subcommand that produced the outputs.
    pub command: String,
    pub package: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub wall_seconds: f64,
    /// Echo of the parsed configuration.
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, threads: usize, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            threads,
            wall_seconds: 0.0,
            config,
        }
    }
}

/// Writes a pretty-printed JSON document with a trailing newline.
pub fn write_json<W: Write, T: Serialize>(mut writer: W, value: &T) -> Result<(), ReportError> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::{CheckRow, SuiteReport};

    fn sample_snapshots() -> Vec<SnapshotRow> {
        vec![
            SnapshotRow {
                replication: 0,
                time: 0.0,
                statistic_id: "mean".to_string(),
                value: 1.5,
            },
            SnapshotRow {
                replication: 0,
                time: 0.125,
                statistic_id: "mean".to_string(),
                value: -0.25,
            },
        ]
    }

    #[test]
    fn snapshot_csv_has_expected_header_and_shortest_floats() {
        let mut buffer = Vec::new();
        write_snapshots(&mut buffer, &sample_snapshots()).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "replication,time,statistic_id,value"
        );
        assert_eq!(lines.next().unwrap(), "0,0.0,mean,1.5");
        assert_eq!(lines.next().unwrap(), "0,0.125,mean,-0.25");
        assert!(lines.next().is_none());
    }

    #[test]
    fn csv_output_is_byte_stable() {
        let rows = sample_snapshots();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_snapshots(&mut a, &rows).unwrap();
        write_snapshots(&mut b, &rows).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn diagnostics_csv_uses_particle_count_column() {
        let report = DynkinReport {
            residual: 0.001,
            std_error: 0.002,
            bias_budget: 0.0005,
        };
        let row = DiagnosticRow::from_dynkin("dynkin/mean", 64, 0.5, &report);
        assert!(row.pass);
        let mut buffer = Vec::new();
        write_diagnostics(&mut buffer, &[row]).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        assert!(text.starts_with("diagnostic_id,N,t,value,std_error,bound,pass\n"));
        assert!(text.contains("dynkin/mean,64,0.5,0.001,0.002,"));
        assert!(text.trim_end().ends_with(",true"));
    }

    #[test]
    fn trotter_row_reports_side_gap_against_combined_error() {
        let report = TrotterReport {
            lhs: 0.010,
            lhs_std_error: 0.003,
            rhs: 0.007,
            rhs_std_error: 0.004,
        };
        let row = DiagnosticRow::from_trotter("trotter/mean", 32, 0.2, &report);
        assert!((row.value - 0.003).abs() < 1e-15);
        assert!((row.std_error - 0.005).abs() < 1e-15);
        assert!(row.pass);
    }

    #[test]
    fn check_rows_csv_prefixes_the_suite_name() {
        let report = SuiteReport {
            name: "metric".to_string(),
            rows: vec![CheckRow {
                case: "transport_oracle/000".to_string(),
                value: 1e-12,
                bound: 1e-9,
                pass: true,
            }],
            vacuous: false,
        };
        let mut buffer = Vec::new();
        write_check_rows(&mut buffer, &report).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        assert_eq!(
            text,
            "suite,case,value,bound,pass\nmetric,transport_oracle/000,1e-12,1e-9,true\n"
        );
    }

    #[test]
    fn manifest_json_round_trips() {
        let mut manifest = RunManifest::new(
            "rate",
            7,
            4,
            serde_json::json!({"dt": 0.0009765625, "particles": [64, 128]}),
        );
        manifest.wall_seconds = 12.5;
        let mut buffer = Vec::new();
        write_json(&mut buffer, &manifest).unwrap();
        let parsed: serde_json::Value = serde_json::from_slice(&buffer).unwrap();
        assert_eq!(parsed["command"], "rate");
        assert_eq!(parsed["seed"], 7);
        assert_eq!(parsed["config"]["particles"][1], 128);
        assert_eq!(parsed["wall_seconds"], 12.5);
    }
}
