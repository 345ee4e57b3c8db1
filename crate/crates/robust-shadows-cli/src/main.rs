//! Command-line driver for the robust-shadows experiment harness.
//!
//! Exit codes: 0 on success, 2 for config errors (unreadable, unparsable, or
//! invalid config files and bad `moment-check` parameters), 3 when `--check`
//! finds a threshold violation, 1 for any other runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robust_shadows::experiments::{check_thresholds, execute, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "robust-shadows",
    version,
    about = "Shadow-tomography experiments with worst-case corruption and robust estimators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its CSV and JSON sidecar.
    Run {
        /// Path to the experiment config (JSON).
        config: PathBuf,
        /// Evaluate the experiment's pass thresholds after the run.
        #[arg(long)]
        check: bool,
    },
    /// Parse and validate a config without running anything.
    Validate {
        /// Path to the experiment config (JSON).
        config: PathBuf,
    },
    /// Audit the closed-form overlap moments against Monte Carlo sampling.
    MomentCheck {
        /// Hilbert-space dimension (at most 16).
        #[arg(long, default_value_t = 4)]
        d: usize,
        /// Highest moment order (at most 4).
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Number of Monte Carlo samples.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Master seed for the sample streams.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const CONFIG_ERROR: u8 = 2;
const CHECK_FAILURE: u8 = 3;

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, check } => run_command(&config, check),
        Command::Validate { config } => validate_command(&config),
        Command::MomentCheck {
            d,
            k,
            samples,
            seed,
        } => moment_check_command(d, k, samples, seed),
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::from_path(path).map_err(|e| {
        eprintln!("config error: {e}");
        ExitCode::from(CONFIG_ERROR)
    })
}

fn run_command(path: &Path, check: bool) -> ExitCode {
    let cfg = match load(path) {
        Ok(cfg) => cfg,
        Err(code) => return code,
    };
    println!(
        "running {} (d={}, n_copies={}, repeats={})",
        cfg.experiment,
        cfg.dimension(),
        cfg.n_copies,
        cfg.repeats
    );
    let exec = match execute(&cfg) {
        Ok(exec) => exec,
        Err(e) => {
            eprintln!("run error: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!(
        "wrote {} rows to {} in {} ms",
        exec.output.rows.len(),
        exec.artifacts.csv_path.display(),
        exec.wall_time_ms
    );
    println!("csv sha256: {}", exec.artifacts.csv_sha256);
    println!("sidecar: {}", exec.artifacts.sidecar_path.display());
    if check {
        let report = check_thresholds(&cfg, &exec.output);
        for line in &report.lines {
            println!("{line}");
        }
        if !report.passed {
            println!("CHECK FAILED");
            return ExitCode::from(CHECK_FAILURE);
        }
        println!("CHECK PASSED");
    }
    ExitCode::SUCCESS
}

fn validate_command(path: &Path) -> ExitCode {
    let cfg = match load(path) {
        Ok(cfg) => cfg,
        Err(code) => return code,
    };
    println!(
        "config OK: {} (d={}, n_copies={}, repeats={}, output={})",
        cfg.experiment,
        cfg.dimension(),
        cfg.n_copies,
        cfg.repeats,
        cfg.output_path.display()
    );
    ExitCode::SUCCESS
}

fn moment_check_command(d: usize, k: usize, samples: usize, seed: u64) -> ExitCode {
    let text = serde_json::json!({
        "experiment": "moment_check",
        "dim": d,
        "max_order": k,
        "n_copies": samples,
        "master_seed": seed,
        "m": 4,
        "repeats": 1,
        "output_path": "unused.csv",
    })
    .to_string();
    let cfg = match ExperimentConfig::from_json(&text) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let out = match run_experiment(&cfg) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("run error: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("moment audit: d={d}, orders 1..={k}, {samples} samples, seed {seed}");
    println!(
        "{:>10}  {:>5}  {:>18}  {:>18}  {:>8}",
        "observable", "order", "exact", "empirical", "z"
    );
    if let Some(entries) = out.report["entries"].as_array() {
        for e in entries {
            println!(
                "{:>10}  {:>5}  {:>18.12}  {:>18.12}  {:>8.2}",
                e["observable"].as_u64().unwrap_or(0),
                e["order"].as_u64().unwrap_or(0),
                e["exact"].as_f64().unwrap_or(f64::NAN),
                e["empirical"].as_f64().unwrap_or(f64::NAN),
                e["z"].as_f64().unwrap_or(f64::NAN),
            );
        }
    }
    println!(
        "max |z| = {:.3}",
        out.report["max_abs_z"].as_f64().unwrap_or(f64::NAN)
    );
    ExitCode::SUCCESS
}
