//! Experiment configuration: the JSON schema consumed by the CLI.
//!
//! A config names one experiment, its physical parameters, the estimators to
//! compare, and where the artifacts go. Every field except `experiment` and
//! `output_path` carries a default, so minimal configs stay small; the JSON
//! sidecar written next to the CSV echoes the fully resolved struct.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::quantum::{MAX_DIM, MIN_DIM};
use crate::robust_stats::default_batch_size;
use crate::shadows::EstimatorKind;
use crate::{Error, Result};

/// Which experiment a config drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Fidelity estimation of Haar targets under i.i.d. sample replacement.
    Fidelity,
    /// Median-of-means lower bound: per-batch worst-case replacement.
    MomAttack,
    /// Bit-flip attack on the direct per-observable baseline.
    NaiveAttack,
    /// Total-variation-optimal stream rewrite and its detectability.
    Coupling,
    /// Selection-based full-state estimation under corruption.
    Tomography,
    /// Monte Carlo audit of the closed-form overlap moments.
    MomentCheck,
}

impl ExperimentKind {
    /// Stable identifier written to the CSV `experiment` column.
    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::Fidelity => "fidelity",
            ExperimentKind::MomAttack => "mom_attack",
            ExperimentKind::NaiveAttack => "naive_attack",
            ExperimentKind::Coupling => "coupling",
            ExperimentKind::Tomography => "tomography",
            ExperimentKind::MomentCheck => "moment_check",
        }
    }

    /// Tag mixed into every derived seed path so distinct experiments never
    /// share random streams.
    pub(crate) fn seed_tag(self) -> u64 {
        self as u64
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// An estimator request. Omitted parameters resolve at run time to the
/// standard defaults: batch size `n/7` for the median of means, trim budget
/// `2 * gamma` for the truncated mean (so the trim tracks the corruption
/// level of each grid point and degenerates to the plain mean at zero).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum EstimatorSpec {
    EmpiricalMean,
    MedianOfMeans {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_size: Option<usize>,
    },
    TruncatedMean {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trim: Option<f64>,
    },
}

impl EstimatorSpec {
    /// Concrete estimator for a run on `n` samples at corruption budget
    /// `gamma`. The adaptive trim is capped at 0.25 so it always stays a
    /// valid (below one half) per-side budget.
    pub fn resolve(self, n: usize, gamma: f64) -> EstimatorKind {
        match self {
            EstimatorSpec::EmpiricalMean => EstimatorKind::EmpiricalMean,
            EstimatorSpec::MedianOfMeans { batch_size } => EstimatorKind::MedianOfMeans {
                batch_size: batch_size.unwrap_or_else(|| default_batch_size(n)),
            },
            EstimatorSpec::TruncatedMean { trim } => EstimatorKind::TruncatedMean {
                trim: trim.unwrap_or_else(|| (2.0 * gamma).min(0.25)),
            },
        }
    }

    /// Stable tag written to the CSV `estimator` column.
    pub fn tag(self) -> &'static str {
        match self {
            EstimatorSpec::EmpiricalMean => "empirical_mean",
            EstimatorSpec::MedianOfMeans { .. } => "median_of_means",
            EstimatorSpec::TruncatedMean { .. } => "truncated_mean",
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            EstimatorSpec::EmpiricalMean => Ok(()),
            EstimatorSpec::MedianOfMeans {
                batch_size: Some(0),
            } => Err(Error::Config(
                "median_of_means batch_size must be at least 1".into(),
            )),
            EstimatorSpec::MedianOfMeans { .. } => Ok(()),
            EstimatorSpec::TruncatedMean { trim: Some(t) } if !(0.0..0.5).contains(&t) => {
                Err(Error::Config(format!(
                    "truncated_mean trim {t} must lie in [0, 0.5)"
                )))
            }
            EstimatorSpec::TruncatedMean { .. } => Ok(()),
        }
    }
}

fn default_n_qubits() -> usize {
    5
}
fn default_n_copies() -> usize {
    10_000
}
fn default_m() -> usize {
    1
}
fn default_gamma_grid() -> Vec<f64> {
    vec![0.0, 0.005, 0.01, 0.015, 0.02]
}
fn default_estimators() -> Vec<EstimatorSpec> {
    vec![
        EstimatorSpec::MedianOfMeans { batch_size: None },
        EstimatorSpec::TruncatedMean { trim: None },
    ]
}
fn default_target_fidelity() -> f64 {
    0.9
}
fn default_repeats() -> usize {
    5
}
fn default_rank() -> usize {
    1
}
fn default_max_order() -> usize {
    4
}

/// Full description of one experiment run.
///
/// The last five fields are extensions beyond the core schema; they default
/// sensibly and only some experiments read them (`rank`, `epsilon`,
/// `net_cap` for tomography and the hard instances, `max_order` and `dim`
/// for the moment check).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Qubit count; the working dimension is `2^n_qubits` unless `dim`
    /// overrides it (moment check only).
    #[serde(default = "default_n_qubits")]
    pub n_qubits: usize,
    /// Measurement budget: shadow samples, direct copies, or Monte Carlo
    /// draws depending on the experiment.
    #[serde(default = "default_n_copies")]
    pub n_copies: usize,
    /// Number of observables / target states / measurement groups.
    #[serde(default = "default_m", alias = "M")]
    pub m: usize,
    /// Corruption budgets to sweep.
    #[serde(default = "default_gamma_grid")]
    pub gamma_grid: Vec<f64>,
    /// Estimators to compare (fidelity and batch-attack experiments).
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorSpec>,
    /// Ground-truth overlap of the constructed target states.
    #[serde(default = "default_target_fidelity")]
    pub target_fidelity: f64,
    /// Independent repetitions, each with its own derived seed.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Root of every random stream in the run.
    #[serde(default)]
    pub master_seed: u64,
    /// CSV destination; the JSON sidecar lands next to it with extension
    /// `.json`.
    pub output_path: PathBuf,

    /// Mixed-state rank for the tomography demo.
    #[serde(default = "default_rank")]
    pub rank: usize,
    /// Accuracy parameter: tomography tolerance (default 0.3) or hard
    /// instance / coupling bias (default 0.1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Covering-net size cap for the tomography demo (default 64; the
    /// library-level construction default is 100 000).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net_cap: Option<usize>,
    /// Highest moment order audited by the moment check.
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    /// Direct dimension override for the moment check, which is the one
    /// experiment meaningful at non-power-of-two dimensions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

impl ExperimentConfig {
    /// Parse a config from JSON text and validate it.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a config file and validate it.
    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Working dimension: `dim` override if present, else `2^n_qubits`.
    pub fn dimension(&self) -> usize {
        self.dim.unwrap_or(1usize << self.n_qubits)
    }

    /// Accuracy parameter with its per-experiment default.
    pub fn effective_epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(match self.experiment {
            ExperimentKind::Tomography => 0.3,
            _ => 0.1,
        })
    }

    /// Check every invariant the runners rely on.
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.n_copies == 0 {
            return Err(Error::Config("n_copies must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if self.gamma_grid.is_empty() {
            return Err(Error::Config("gamma_grid must not be empty".into()));
        }
        if let Some(&g) = self
            .gamma_grid
            .iter()
            .find(|g| !g.is_finite() || !(0.0..=1.0).contains(*g))
        {
            return Err(Error::Config(format!(
                "gamma_grid value {g} must lie in [0, 1]"
            )));
        }
        if !(0.0..=1.0).contains(&self.target_fidelity) {
            return Err(Error::Config(format!(
                "target_fidelity {} must lie in [0, 1]",
                self.target_fidelity
            )));
        }
        if self.output_path.as_os_str().is_empty() {
            return Err(Error::Config("output_path must not be empty".into()));
        }
        if self
            .output_path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            return Err(Error::Config(
                "output_path holds the CSV; the .json extension is reserved for the sidecar".into(),
            ));
        }
        for est in &self.estimators {
            est.validate()?;
        }
        if self.dim.is_some() && self.experiment != ExperimentKind::MomentCheck {
            return Err(Error::Config(
                "dim override applies to the moment check only; use n_qubits".into(),
            ));
        }

        let d = self.dimension();
        if !(MIN_DIM..=MAX_DIM).contains(&d) {
            return Err(Error::InvalidDimension {
                dim: d,
                min: MIN_DIM,
                max: MAX_DIM,
            });
        }

        match self.experiment {
            ExperimentKind::Fidelity | ExperimentKind::MomAttack => {
                if self.n_qubits == 0 {
                    return Err(Error::Config(
                        "fidelity experiments need n_qubits at least 1".into(),
                    ));
                }
                if self.estimators.is_empty() {
                    return Err(Error::Config(
                        "fidelity experiments need at least one estimator".into(),
                    ));
                }
                if self.experiment == ExperimentKind::MomAttack
                    && !self
                        .estimators
                        .iter()
                        .any(|e| matches!(e, EstimatorSpec::MedianOfMeans { .. }))
                {
                    return Err(Error::Config(
                        "the batch attack demonstrates the median of means; include one".into(),
                    ));
                }
            }
            ExperimentKind::NaiveAttack | ExperimentKind::Coupling => {
                let eps = self.effective_epsilon();
                if !(0.0..=1.0 / 3.0 + 1e-12).contains(&eps) {
                    return Err(Error::Config(format!(
                        "epsilon {eps} must lie in [0, 1/3] so the biased states stay valid"
                    )));
                }
                if self.experiment == ExperimentKind::NaiveAttack {
                    if self.n_qubits == 0 {
                        return Err(Error::Config(
                            "the direct-measurement attack needs at least one qubit".into(),
                        ));
                    }
                    if self.n_copies < self.m {
                        return Err(Error::Config(format!(
                            "direct measurement needs at least one copy per observable ({} < {})",
                            self.n_copies, self.m
                        )));
                    }
                }
            }
            ExperimentKind::Tomography => {
                if d > 4 {
                    return Err(Error::Config(format!(
                        "the tomography demo is budgeted for dimension at most 4, got {d}"
                    )));
                }
                if self.rank == 0 || self.rank > d {
                    return Err(Error::Config(format!(
                        "rank {} must lie in 1..={d}",
                        self.rank
                    )));
                }
                let eps = self.effective_epsilon();
                if !(eps > 0.0 && eps <= 1.0) {
                    return Err(Error::Config(format!(
                        "tomography tolerance {eps} must lie in (0, 1]"
                    )));
                }
                if let Some(&g) = self.gamma_grid.iter().find(|g| **g >= 0.25) {
                    return Err(Error::Config(format!(
                        "tomography corruption {g} must stay below 0.25 so the trim stays below 1/2"
                    )));
                }
            }
            ExperimentKind::MomentCheck => {
                if !(1..=4).contains(&self.max_order) {
                    return Err(Error::Config(format!(
                        "max_order {} must lie in 1..=4",
                        self.max_order
                    )));
                }
                if d > 16 {
                    return Err(Error::Config(format!(
                        "the moment check is budgeted for dimension at most 16, got {d}"
                    )));
                }
            }
        }
        Ok(())
    }
}
