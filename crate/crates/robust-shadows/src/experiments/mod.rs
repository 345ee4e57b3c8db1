//! Experiment harness: JSON-configured runs that tie the whole library
//! together — state and shadow generation, adversaries, robust estimators,
//! and tomography — and persist deterministic artifacts.
//!
//! A run is described by an [`ExperimentConfig`] (usually loaded from a JSON
//! file), executed by [`run_experiment`], and written out by [`execute`] as
//! two artifacts:
//!
//! * a CSV of [`ResultRow`]s at the configured `output_path`, with a fixed
//!   eight-column layout and full-precision floats so reruns are
//!   byte-identical, and
//! * a JSON sidecar next to it (same stem, `.json` extension) holding the
//!   echoed config, the CSV's SHA-256, the wall time, and the experiment's
//!   diagnostic report (p-values, z-scores, net sizes, ...).
//!
//! [`check_thresholds`] evaluates a finished run against the pass criteria
//! each experiment is meant to demonstrate; the CLI exposes it as `--check`.

pub mod config;
pub mod output;
pub mod runners;

pub use config::{EstimatorSpec, ExperimentConfig, ExperimentKind};
pub use output::{
    csv_bytes, parse_csv, sha256_hex, ParsedRow, ResultRow, WrittenArtifacts, CSV_HEADER,
};
pub use runners::{check_thresholds, run_experiment, CheckReport, RunOutput};

use crate::Result;

/// A finished, persisted run.
#[derive(Debug)]
pub struct Execution {
    pub output: RunOutput,
    pub artifacts: WrittenArtifacts,
    pub wall_time_ms: u128,
}

/// Run an experiment end to end: validate, execute, and write the CSV and
/// sidecar artifacts.
pub fn execute(cfg: &ExperimentConfig) -> Result<Execution> {
    let started = std::time::Instant::now();
    let output = runners::run_experiment(cfg)?;
    let wall_time_ms = started.elapsed().as_millis();
    let artifacts = output::write_artifacts(cfg, &output.rows, &output.report, wall_time_ms)?;
    Ok(Execution {
        output,
        artifacts,
        wall_time_ms,
    })
}
