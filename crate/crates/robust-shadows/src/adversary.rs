//! Worst-case corruption strategies against both measurement protocols.
//!
//! Three attack families are implemented:
//! * replacement of shadow samples with a chosen direction, either i.i.d.
//!   or targeted at the weakest samples of each batch;
//! * bit flips against the direct per-observable baseline, which saturate
//!   the targeted group once the global budget exceeds its size;
//! * distribution rewrites that pass every marginal test, built from the
//!   optimal coupling between the honest and a nearby alternative law, so
//!   the realized change rate equals the total-variation distance exactly.
//!
//! `hard_instance` constructs the matching family of nearly indistinguishable
//! states whose pairwise closeness makes the third attack quiet.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::quantum::{haar_unitary, DensityMatrix, Observable, PureState};
use crate::robust_stats::{DiscreteDistribution, ShiftDirection};
use crate::shadows::{DirectOutcome, ShadowSample};
use crate::{Error, Result};

/// How replacement targets are selected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReplacementMode {
    /// Replace each sample independently with probability `gamma`.
    IidProb,
    /// Split the stream into consecutive full batches of `batch_size` and
    /// replace the `floor(gamma * batch_size)` samples of each batch whose
    /// overlap with the attack target is smallest.
    PerBatchWorst { batch_size: usize },
}

/// Bookkeeping for an executed attack.
#[derive(Clone, Copy, Debug)]
pub struct CorruptionReport {
    /// Number of records the adversary saw.
    pub n_total: usize,
    /// Number of records actually altered.
    pub n_changed: usize,
    /// `n_changed / n_total`.
    pub realized_fraction: f64,
}

impl CorruptionReport {
    fn new(n_total: usize, n_changed: usize) -> Self {
        Self {
            n_total,
            n_changed,
            realized_fraction: n_changed as f64 / n_total.max(1) as f64,
        }
    }
}

/// A declarative corruption strategy: which attack to run and its budget.
#[derive(Clone, Debug)]
pub struct AdversarySpec {
    pub kind: AdversaryKind,
    /// Corruption budget as a fraction of the record stream.
    pub gamma: f64,
}

/// The attack family an [`AdversarySpec`] dispatches to.
#[derive(Clone, Debug)]
pub enum AdversaryKind {
    /// Replace shadow samples with `target` (see [`fidelity_attack`]).
    FidelityReplace {
        target: PureState,
        mode: ReplacementMode,
    },
    /// Flip outcome bits of one direct-measurement group (see
    /// [`flip_attack`]); `Up` raises the group's estimate.
    BitFlip {
        target_observable: usize,
        direction: ShiftDirection,
    },
    /// Rewrite outcome streams toward the alternative law with this index
    /// (see [`coupling_attack`]).
    Coupling { alternative: usize },
}

impl AdversarySpec {
    /// Apply this adversary to a shadow-sample stream.
    pub fn corrupt_shadow_samples<R: Rng + ?Sized>(
        &self,
        samples: &[ShadowSample],
        rng: &mut R,
    ) -> Result<(Vec<ShadowSample>, CorruptionReport)> {
        match &self.kind {
            AdversaryKind::FidelityReplace { target, mode } => {
                fidelity_attack(samples, target, self.gamma, *mode, rng)
            }
            _ => Err(Error::Config(
                "only fidelity-replacement adversaries apply to shadow samples".into(),
            )),
        }
    }

    /// Apply this adversary to a pooled direct-measurement bit stream.
    pub fn corrupt_direct_outcomes(
        &self,
        outcomes: &mut Vec<DirectOutcome>,
    ) -> Result<CorruptionReport> {
        match &self.kind {
            AdversaryKind::BitFlip {
                target_observable,
                direction,
            } => {
                let (bad, report) =
                    flip_attack(outcomes, *target_observable, self.gamma, *direction)?;
                *outcomes = bad;
                Ok(report)
            }
            _ => Err(Error::Config(
                "only bit-flip adversaries apply to direct measurement outcomes".into(),
            )),
        }
    }
}

/// Replace shadow samples with the attack target, inflating every estimate
/// aligned with it.
///
/// Returns the corrupted stream (order preserved) and a report.
pub fn fidelity_attack<R: Rng + ?Sized>(
    samples: &[ShadowSample],
    target: &PureState,
    gamma: f64,
    mode: ReplacementMode,
    rng: &mut R,
) -> Result<(Vec<ShadowSample>, CorruptionReport)> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidBudget {
            budget: gamma,
            reason: "corruption fraction must lie in [0, 1]".into(),
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if samples[0].vector.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: samples[0].vector.dim(),
            got: target.dim(),
        });
    }
    let mut corrupted = samples.to_vec();
    let mut changed = 0usize;
    match mode {
        ReplacementMode::IidProb => {
            for s in corrupted.iter_mut() {
                if rng.gen_bool(gamma) {
                    s.vector = target.clone();
                    changed += 1;
                }
            }
        }
        ReplacementMode::PerBatchWorst { batch_size } => {
            if batch_size == 0 {
                return Err(Error::InvalidArgument(
                    "batch size must be positive".into(),
                ));
            }
            let per_batch = (gamma * batch_size as f64 + 1e-9).floor() as usize;
            for batch in corrupted.chunks_mut(batch_size) {
                if batch.len() < batch_size {
                    break; // trailing partial batch is left alone
                }
                let mut order: Vec<usize> = (0..batch.len()).collect();
                order.sort_by(|&a, &b| {
                    batch[a]
                        .vector
                        .overlap_sq(target)
                        .total_cmp(&batch[b].vector.overlap_sq(target))
                });
                for &idx in order.iter().take(per_batch) {
                    batch[idx].vector = target.clone();
                    changed += 1;
                }
            }
        }
    }
    let report = CorruptionReport::new(samples.len(), changed);
    Ok((corrupted, report))
}

/// Flip outcome bits of one observable's measurement group.
///
/// The budget is `floor(gamma * total_outcomes)` flips, all spent inside the
/// targeted group on the first eligible bits encountered; once the group runs
/// out of eligible bits the attack saturates, capping the estimate shift at
/// `min(gamma * m, 1)` for `m` equally sized groups. `Up` raises the group's
/// accept rate (flips zeros to ones), `Down` lowers it.
pub fn flip_attack(
    outcomes: &[DirectOutcome],
    target_index: usize,
    gamma: f64,
    direction: ShiftDirection,
) -> Result<(Vec<DirectOutcome>, CorruptionReport)> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidBudget {
            budget: gamma,
            reason: "corruption fraction must lie in [0, 1]".into(),
        });
    }
    if outcomes.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !outcomes.iter().any(|o| o.observable_index == target_index) {
        return Err(Error::InvalidArgument(format!(
            "no outcomes belong to observable {target_index}"
        )));
    }
    let budget = (gamma * outcomes.len() as f64 + 1e-9).floor() as usize;
    let (from, to) = match direction {
        ShiftDirection::Up => (0u8, 1u8),
        ShiftDirection::Down => (1u8, 0u8),
    };
    let mut corrupted = outcomes.to_vec();
    let mut changed = 0usize;
    for o in corrupted.iter_mut() {
        if changed == budget {
            break;
        }
        if o.observable_index == target_index && o.bit == from {
            o.bit = to;
            changed += 1;
        }
    }
    let report = CorruptionReport::new(outcomes.len(), changed);
    Ok((corrupted, report))
}

/// Rewrite one draw from `p` into a draw from `q` via the maximal coupling.
///
/// Given `x` distributed as `p`, the returned index is distributed exactly
/// as `q`, and differs from `x` with probability exactly `TV(p, q)`: keep
/// `x` with probability `min(1, q(x)/p(x))`, otherwise resample from the
/// normalized positive part of `q - p`.
pub fn tv_optimal_coupling<R: Rng + ?Sized>(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    x_idx: usize,
    rng: &mut R,
) -> Result<usize> {
    let tv = p.tv_distance(q)?; // also validates the shared support
    if x_idx >= p.len() {
        return Err(Error::InvalidArgument(format!(
            "outcome index {x_idx} outside support of size {}",
            p.len()
        )));
    }
    let px = p.probs()[x_idx];
    if px <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "outcome {x_idx} has zero probability under the source law"
        )));
    }
    if tv < 1e-15 {
        return Ok(x_idx);
    }
    let ratio = q.probs()[x_idx] / px;
    if rng.gen::<f64>() < ratio {
        return Ok(x_idx);
    }
    let residual: Vec<f64> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(&pp, &qq)| (qq - pp).max(0.0))
        .collect();
    Ok(crate::quantum::sample_index(&residual, tv, rng))
}

/// Outcome distributions for one measurement group: the honest law and the
/// law the group would follow under each alternative state.
#[derive(Clone, Debug)]
pub struct MeasurementLaw {
    pub null: DiscreteDistribution,
    pub alternatives: Vec<DiscreteDistribution>,
}

impl MeasurementLaw {
    /// Validate that every alternative shares the null law's support.
    pub fn new(null: DiscreteDistribution, alternatives: Vec<DiscreteDistribution>) -> Result<Self> {
        if alternatives.is_empty() {
            return Err(Error::EmptyBatch);
        }
        for alt in &alternatives {
            null.tv_distance(alt)?; // support check
        }
        Ok(Self { null, alternatives })
    }
}

/// Result of a coupling rewrite over a full outcome stream.
#[derive(Clone, Debug)]
pub struct CouplingOutcome {
    /// Rewritten outcome indices, aligned with the input stream.
    pub outcomes: Vec<usize>,
    pub report: CorruptionReport,
    /// Which alternative the adversary committed to.
    pub chosen_alternative: usize,
    /// Expected change fraction averaged over the uniform alternative
    /// choice: `(1/(n m)) * sum_j sum_i TV(p_{g_j}, q_{g_j, i})`.
    pub predicted_fraction: f64,
}

/// Rewrite an outcome stream so it follows a uniformly chosen alternative
/// while touching as few records as any attack with that marginal can.
///
/// Each outcome is rewritten through [`tv_optimal_coupling`] toward the
/// chosen alternative's law for its group. `max_changes`, when given, stops
/// further rewrites once that many records have been altered.
pub fn coupling_attack<R: Rng + ?Sized>(
    outcomes: &[usize],
    groups: &[usize],
    laws: &[MeasurementLaw],
    max_changes: Option<usize>,
    rng: &mut R,
) -> Result<CouplingOutcome> {
    if outcomes.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if outcomes.len() != groups.len() {
        return Err(Error::DimensionMismatch {
            expected: outcomes.len(),
            got: groups.len(),
        });
    }
    if laws.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let m = laws[0].alternatives.len();
    if laws.iter().any(|l| l.alternatives.len() != m) {
        return Err(Error::InvalidArgument(
            "all groups must offer the same number of alternatives".into(),
        ));
    }
    if let Some(&bad) = groups.iter().find(|&&g| g >= laws.len()) {
        return Err(Error::InvalidArgument(format!(
            "group index {bad} outside the {} defined laws",
            laws.len()
        )));
    }
    // tv[g][i] = TV(null law of group g, alternative i's law for group g)
    let mut tv = vec![vec![0.0f64; m]; laws.len()];
    for (g, law) in laws.iter().enumerate() {
        for (i, alt) in law.alternatives.iter().enumerate() {
            tv[g][i] = law.null.tv_distance(alt)?;
        }
    }
    let n = outcomes.len();
    let predicted_fraction = groups
        .iter()
        .map(|&g| tv[g].iter().sum::<f64>())
        .sum::<f64>()
        / (n as f64 * m as f64);

    let chosen = rng.gen_range(0..m);
    let cap = max_changes.unwrap_or(usize::MAX);
    let mut rewritten = Vec::with_capacity(n);
    let mut changed = 0usize;
    for (&x, &g) in outcomes.iter().zip(groups) {
        if changed >= cap {
            rewritten.push(x);
            continue;
        }
        let y = tv_optimal_coupling(&laws[g].null, &laws[g].alternatives[chosen], x, rng)?;
        if y != x {
            changed += 1;
        }
        rewritten.push(y);
    }
    let report = CorruptionReport::new(n, changed);
    Ok(CouplingOutcome {
        outcomes: rewritten,
        report,
        chosen_alternative: chosen,
        predicted_fraction,
    })
}

/// Symmetric two-outcome laws for `m` groups: every law is a fair coin
/// except that alternative `i` biases group `i`'s accept rate up by
/// `3 epsilon / 2`, so `TV(null, alternative) = 3 epsilon / 2` on the
/// diagonal and zero elsewhere. These are the outcome laws of measuring the
/// rotated-parity family of [`hard_instance`] directly, with the vanishing
/// off-diagonal cross terms idealized to zero.
pub fn symmetric_bernoulli_laws(m: usize, epsilon: f64) -> Result<Vec<MeasurementLaw>> {
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    if !(0.0..=1.0 / 3.0 + 1e-12).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} must lie in [0, 1/3]"
        )));
    }
    let fair = DiscreteDistribution::bernoulli(0.5)?;
    let biased = DiscreteDistribution::bernoulli(0.5 + 1.5 * epsilon)?;
    (0..m)
        .map(|g| {
            let alternatives = (0..m)
                .map(|i| if i == g { biased.clone() } else { fair.clone() })
                .collect();
            MeasurementLaw::new(fair.clone(), alternatives)
        })
        .collect()
}

/// A family of nearly indistinguishable states and their distinguishing
/// observables.
#[derive(Clone, Debug)]
pub struct HardInstance {
    /// `O_i = U_i^H Z U_i` with `Z = diag(+1 ... +1, -1 ... -1)`.
    pub observables: Vec<Observable>,
    /// `sigma_i = (I + 3 epsilon O_i) / d`.
    pub alternatives: Vec<DensityMatrix>,
    /// The maximally mixed state.
    pub null: DensityMatrix,
}

/// Build the rotated-parity family: `m` Haar-conjugated balanced-sign
/// observables and the states tilted by `3 epsilon` along each.
///
/// Requires `d` to be a power of two (the qubit-register dimensions the
/// balanced signature is designed for) and `epsilon <= 1/3` (so each tilted
/// state stays positive).
pub fn hard_instance<R: Rng + ?Sized>(
    d: usize,
    m: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<HardInstance> {
    if !d.is_power_of_two() || d < 2 {
        return Err(Error::InvalidArgument(format!(
            "dimension {d} must be a power of two (at least 2) for the balanced sign observable"
        )));
    }
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    if !(0.0..=1.0 / 3.0 + 1e-12).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} must lie in [0, 1/3] to keep states positive"
        )));
    }
    let null = DensityMatrix::new(DMatrix::identity(d, d).scale(1.0 / d as f64))?;
    let mut observables = Vec::with_capacity(m);
    let mut alternatives = Vec::with_capacity(m);
    for _ in 0..m {
        let u = haar_unitary(d, rng)?;
        // rows 0..d/2 of U keep sign +1, the rest -1: O = U^H Z U
        let mut zu = u.matrix().clone();
        for row in d / 2..d {
            for col in 0..d {
                zu[(row, col)] = -zu[(row, col)];
            }
        }
        let o_mat = u.matrix().adjoint() * zu;
        let obs = Observable::new(o_mat)?;
        let mut sigma = obs.matrix().scale(3.0 * epsilon / d as f64);
        for i in 0..d {
            sigma[(i, i)] += C64::new(1.0 / d as f64, 0.0);
        }
        alternatives.push(DensityMatrix::new(sigma)?);
        observables.push(obs);
    }
    Ok(HardInstance {
        observables,
        alternatives,
        null,
    })
}
