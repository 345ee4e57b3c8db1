//! Result rows and deterministic artifact writing.
//!
//! A run produces a CSV of [`ResultRow`]s plus a JSON sidecar (same path,
//! `.json` extension) echoing the config, the CSV's SHA-256, the wall time,
//! and a per-experiment report. The CSV bytes are a pure function of the
//! rows — floats are printed with 17 significant digits, enough to round-trip
//! any `f64` — so identical config and master seed reproduce identical files.
//! Wall time lives only on the in-memory rows and in the sidecar; putting it
//! in the CSV would break that reproducibility.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Result;

use super::config::ExperimentConfig;

/// Column names, in the exact order the encoder writes them.
pub const CSV_HEADER: &str =
    "experiment,gamma,estimator,observable_index,true_value,estimate,abs_error,seed";

/// One measurement of one estimator against one ground truth.
///
/// `gamma` is the corruption budget, except for moment-check rows where it
/// carries the moment order. `wall_time_ms` is the enclosing repeat's
/// elapsed time; it is deliberately excluded from the CSV encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub experiment: &'static str,
    pub gamma: f64,
    pub estimator: &'static str,
    pub observable_index: usize,
    pub true_value: f64,
    pub estimate: f64,
    pub abs_error: f64,
    pub seed: u64,
    pub wall_time_ms: f64,
}

impl ResultRow {
    /// Build a row, deriving `abs_error` from the estimate and truth so the
    /// recomputability invariant holds by construction.
    pub fn new(
        experiment: &'static str,
        gamma: f64,
        estimator: &'static str,
        observable_index: usize,
        true_value: f64,
        estimate: f64,
        seed: u64,
    ) -> Self {
        Self {
            experiment,
            gamma,
            estimator,
            observable_index,
            true_value,
            estimate,
            abs_error: (estimate - true_value).abs(),
            seed,
            wall_time_ms: 0.0,
        }
    }
}

/// Encode rows as CSV text: fixed header, one line per row, floats with 17
/// significant digits.
pub fn csv_bytes(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(CSV_HEADER.len() + 1 + rows.len() * 96);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        // write! into a String cannot fail
        let _ = writeln!(
            out,
            "{},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{}",
            r.experiment,
            r.gamma,
            r.estimator,
            r.observable_index,
            r.true_value,
            r.estimate,
            r.abs_error,
            r.seed,
        );
    }
    out
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config: &'a ExperimentConfig,
    csv_sha256: &'a str,
    wall_time_ms: u128,
    report: &'a serde_json::Value,
}

/// Where a run's artifacts landed.
#[derive(Clone, Debug)]
pub struct WrittenArtifacts {
    pub csv_path: PathBuf,
    pub sidecar_path: PathBuf,
    pub csv_sha256: String,
}

/// Write the CSV to `cfg.output_path` and the sidecar next to it, creating
/// parent directories as needed.
pub fn write_artifacts(
    cfg: &ExperimentConfig,
    rows: &[ResultRow],
    report: &serde_json::Value,
    wall_time_ms: u128,
) -> Result<WrittenArtifacts> {
    let csv_path = cfg.output_path.clone();
    if let Some(parent) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let csv = csv_bytes(rows);
    let csv_sha256 = sha256_hex(csv.as_bytes());
    std::fs::write(&csv_path, &csv)?;

    let sidecar_path = csv_path.with_extension("json");
    let sidecar = Sidecar {
        config: cfg,
        csv_sha256: &csv_sha256,
        wall_time_ms,
        report,
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    std::fs::write(&sidecar_path, text)?;

    Ok(WrittenArtifacts {
        csv_path,
        sidecar_path,
        csv_sha256,
    })
}

/// A row read back from a written CSV. Unlike [`ResultRow`], the tag columns
/// are owned strings and there is no wall-time field (the CSV carries none).
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedRow {
    pub experiment: String,
    pub gamma: f64,
    pub estimator: String,
    pub observable_index: usize,
    pub true_value: f64,
    pub estimate: f64,
    pub abs_error: f64,
    pub seed: u64,
}

/// Read back the rows of a written CSV (used by tests and the CLI summary).
pub fn parse_csv(text: &str) -> Result<Vec<ParsedRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != CSV_HEADER {
        return Err(crate::Error::Config(format!(
            "unexpected CSV header: {header}"
        )));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(crate::Error::Config(format!(
                "row {idx} has {} fields, expected 8",
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| crate::Error::Config(format!("row {idx}: bad float {s}: {e}")))
        };
        rows.push(ParsedRow {
            experiment: fields[0].to_string(),
            gamma: parse_f(fields[1])?,
            estimator: fields[2].to_string(),
            observable_index: fields[3]
                .parse::<usize>()
                .map_err(|e| crate::Error::Config(format!("row {idx}: bad index: {e}")))?,
            true_value: parse_f(fields[4])?,
            estimate: parse_f(fields[5])?,
            abs_error: parse_f(fields[6])?,
            seed: fields[7]
                .parse::<u64>()
                .map_err(|e| crate::Error::Config(format!("row {idx}: bad seed: {e}")))?,
        });
    }
    Ok(rows)
}
