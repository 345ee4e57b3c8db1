//! Shadow-style randomized measurements and the direct per-observable
//! baseline.
//!
//! Each shadow sample applies an independent Haar-random unitary `U` to the
//! state, measures in the computational basis, and records `v = U^H |b>`.
//! The rank-one estimate `(d+1) <v|O|v> - Tr O` is unbiased for `Tr[O rho]`,
//! and a batch of samples serves every observable simultaneously. The
//! `naive_direct_estimate` baseline instead spends its measurement budget on
//! one observable at a time, which is what targeted corruption exploits.
//!
//! Sampling is deterministic given `(seed, sample index)`: each sample draws
//! from its own counter-derived stream, so parallel and sequential runs
//! produce identical output.

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversarySpec, CorruptionReport};
use crate::parallel;
use crate::quantum::{
    ginibre_fill, hermitian_quad_form, mgs_orthonormalize, sample_index, DensityMatrix,
    Observable, PureState, RANK_TOL,
};
use crate::robust_stats::{median_of_means_slice, truncated_mean_in_place, SampleBatch};
use crate::seeding::stream;
use crate::{Error, Result};

/// One randomized measurement record: the post-measurement direction
/// `v = U^H |b>`.
#[derive(Clone, Debug)]
pub struct ShadowSample {
    pub vector: PureState,
}

/// Location estimator applied to per-sample estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Plain average; fastest convergence, no corruption resistance.
    EmpiricalMean,
    /// Median of contiguous batch means, each batch holding `batch_size`
    /// values.
    MedianOfMeans { batch_size: usize },
    /// Symmetric truncated mean dropping a `trim` fraction per side.
    TruncatedMean { trim: f64 },
}

impl EstimatorKind {
    /// Apply the estimator, consuming the raw values (robust variants
    /// reorder in place rather than cloning).
    pub fn estimate(&self, mut values: Vec<f64>) -> Result<f64> {
        match *self {
            EstimatorKind::EmpiricalMean => {
                if values.is_empty() {
                    return Err(Error::EmptyBatch);
                }
                Ok(values.iter().sum::<f64>() / values.len() as f64)
            }
            EstimatorKind::MedianOfMeans { batch_size } => {
                median_of_means_slice(&values, batch_size)
            }
            EstimatorKind::TruncatedMean { trim } => truncated_mean_in_place(&mut values, trim),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::EmpiricalMean => write!(f, "empirical_mean"),
            EstimatorKind::MedianOfMeans { .. } => write!(f, "median_of_means"),
            EstimatorKind::TruncatedMean { .. } => write!(f, "truncated_mean"),
        }
    }
}

/// Reusable per-worker buffers for shadow collection.
struct ShadowScratch {
    /// d x d unitary under construction, column-major.
    a: Vec<C64>,
    /// d x r product `U * Phi` over the kept eigenvectors, column-major.
    w: Vec<C64>,
    /// Born probabilities per outcome.
    p: Vec<f64>,
}

impl ShadowScratch {
    fn new(d: usize, r: usize) -> Self {
        Self {
            a: vec![C64::new(0.0, 0.0); d * d],
            w: vec![C64::new(0.0, 0.0); d * r],
            p: vec![0.0; d],
        }
    }
}

/// Collect `n` randomized-measurement samples from `rho` (`n = 0` yields an
/// empty batch).
///
/// Sample `i` uses the stream derived from `(seed, i)`, so results are
/// independent of thread count and schedule. The Born distribution is
/// computed through the state's eigendecomposition, restricted to
/// eigenvalues above the rank tolerance.
pub fn collect_shadows(rho: &DensityMatrix, n: usize, seed: u64) -> Result<Vec<ShadowSample>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let d = rho.dim();
    let kept: Vec<usize> = (0..d)
        .filter(|&i| rho.eigenvalues()[i] > RANK_TOL)
        .collect();
    let r = kept.len();
    if r == 0 {
        return Err(Error::NotPositive {
            min_eig: rho.eigenvalues()[d - 1],
        });
    }
    let weight_sum: f64 = kept.iter().map(|&i| rho.eigenvalues()[i]).sum();
    let lambda: Vec<f64> = kept
        .iter()
        .map(|&i| rho.eigenvalues()[i] / weight_sum)
        .collect();
    // kept eigenvectors, flattened column-major d x r
    let mut phi = vec![C64::new(0.0, 0.0); d * r];
    for (c, &i) in kept.iter().enumerate() {
        for row in 0..d {
            phi[c * d + row] = rho.eigenvectors()[(row, i)];
        }
    }

    parallel::try_map_indexed_with(
        n,
        || ShadowScratch::new(d, r),
        |scratch, i| {
            let mut rng = stream(seed, &[i as u64]);
            ginibre_fill(&mut rng, &mut scratch.a);
            mgs_orthonormalize(d, &mut scratch.a)?;
            // W[:, c] = sum_k Phi[k, c] * U[:, k]; U's column k is a[k*d..]
            scratch.w.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            for c in 0..r {
                let w_col = &mut scratch.w[c * d..(c + 1) * d];
                for k in 0..d {
                    let f = phi[c * d + k];
                    let u_col = &scratch.a[k * d..(k + 1) * d];
                    for b in 0..d {
                        w_col[b] += f * u_col[b];
                    }
                }
            }
            let mut total = 0.0;
            for b in 0..d {
                let mut pb = 0.0;
                for (c, &l) in lambda.iter().enumerate() {
                    pb += l * scratch.w[c * d + b].norm_sqr();
                }
                scratch.p[b] = pb.max(0.0);
                total += scratch.p[b];
            }
            if (total - 1.0).abs() > 1e-8 {
                return Err(Error::NumericIntegrity {
                    context: format!("Born probabilities for sample {i} do not sum to 1"),
                    value: total,
                });
            }
            let b = sample_index(&scratch.p, total, &mut rng);
            // v = U^H |b>: conjugated b-th row of U
            let v = DVector::from_fn(d, |j, _| scratch.a[j * d + b].conj());
            Ok(ShadowSample {
                vector: PureState::new_unchecked(v),
            })
        },
    )
}

/// The rank-one reconstruction `(d+1) |v><v| - I` whose average over samples
/// converges to the measured state.
pub fn shadow_snapshot(sample: &ShadowSample) -> nalgebra::DMatrix<C64> {
    let v = &sample.vector;
    let d = v.dim();
    let scale = C64::new(d as f64 + 1.0, 0.0);
    nalgebra::DMatrix::from_fn(d, d, |i, j| {
        let outer = v.amplitudes()[i] * v.amplitudes()[j].conj();
        if i == j {
            scale * outer - C64::new(1.0, 0.0)
        } else {
            scale * outer
        }
    })
}

/// Per-sample unbiased estimates `(d+1) <v|O|v> - Tr O` of `Tr[O rho]`.
pub fn raw_estimates(samples: &[ShadowSample], obs: &Observable) -> Result<SampleBatch> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d = obs.dim();
    let scale = d as f64 + 1.0;
    let offset = obs.trace();
    let mat = obs.matrix().as_slice();
    let values = parallel::try_map_slice(samples, |s| {
        if s.vector.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.vector.dim(),
            });
        }
        Ok(scale * hermitian_quad_form(mat, d, s.vector.amplitudes().as_slice()) - offset)
    })?;
    SampleBatch::new(values)
}

/// Estimate `Tr[O_i rho]` for every observable from one shared batch of
/// samples, applying `estimator` to each observable's raw values.
pub fn estimate_observables(
    samples: &[ShadowSample],
    observables: &[Observable],
    estimator: &EstimatorKind,
) -> Result<Vec<f64>> {
    parallel::try_map_slice(observables, |obs| {
        let raw = raw_estimates(samples, obs)?;
        estimator.estimate(raw.into_values())
    })
}

/// One accept/reject measurement of a single observable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DirectOutcome {
    /// Which observable's measurement group produced this outcome.
    pub observable_index: usize,
    /// Accept (1) or reject (0).
    pub bit: u8,
}

/// Result of the direct baseline: raw outcomes (post-corruption when an
/// adversary is given), per-observable estimates, how many copies each
/// observable received, and the corruption report if any.
#[derive(Clone, Debug)]
pub struct NaiveOutcome {
    pub outcomes: Vec<DirectOutcome>,
    pub estimates: Vec<f64>,
    pub group_sizes: Vec<usize>,
    pub corruption: Option<CorruptionReport>,
}

/// Measure each observable directly on its own share of the copy budget.
///
/// Copies are split into `m` equal groups of `floor(n_copies / m)`; the
/// remainder is dropped. Each observable must have spectrum in `[0, 1]`; a
/// copy is measured in the observable's eigenbasis and accepted with
/// probability equal to the drawn eigenvalue, making the accept rate
/// `Tr[O rho]`. When an adversary is given, it corrupts the pooled bit
/// stream before estimation.
pub fn naive_direct_estimate(
    rho: &DensityMatrix,
    observables: &[Observable],
    n_copies: usize,
    seed: u64,
    adversary: Option<&AdversarySpec>,
) -> Result<NaiveOutcome> {
    let m = observables.len();
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    if n_copies < m {
        return Err(Error::InsufficientCopies {
            needed: m,
            got: n_copies,
        });
    }
    let d = rho.dim();
    let group_sizes: Vec<usize> = vec![n_copies / m; m];

    let per_group = parallel::try_map_slice(&(0..m).collect::<Vec<_>>(), |&g| {
        let obs = &observables[g];
        if obs.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: obs.dim(),
            });
        }
        let (evals, evecs) = obs.eigen();
        if evals[0] < -1e-9 || evals[evals.len() - 1] > 1.0 + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "observable {g} must have spectrum in [0, 1] for direct measurement"
            )));
        }
        // outcome distribution over eigenvectors: p_b = <v_b| rho |v_b>
        let mut probs = Vec::with_capacity(d);
        for b in 0..d {
            let col: Vec<C64> = evecs.column(b).iter().copied().collect();
            let p = hermitian_quad_form(rho.matrix().as_slice(), d, &col);
            probs.push(p.max(0.0));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::NumericIntegrity {
                context: format!("eigenbasis probabilities for group {g} do not sum to 1"),
                value: total,
            });
        }
        let mut rng = stream(seed, &[g as u64]);
        let mut bits = Vec::with_capacity(group_sizes[g]);
        for _ in 0..group_sizes[g] {
            let b = sample_index(&probs, total, &mut rng);
            let accept = evals[b].clamp(0.0, 1.0);
            let bit = u8::from(rng.gen_bool(accept));
            bits.push(bit);
        }
        Ok(bits)
    })?;

    let mut outcomes = Vec::with_capacity(m * (n_copies / m));
    for (g, bits) in per_group.iter().enumerate() {
        for &bit in bits {
            outcomes.push(DirectOutcome {
                observable_index: g,
                bit,
            });
        }
    }
    let corruption = match adversary {
        None => None,
        Some(spec) => Some(spec.corrupt_direct_outcomes(&mut outcomes)?),
    };
    let estimates = estimates_from_outcomes(&outcomes, m)?;
    Ok(NaiveOutcome {
        outcomes,
        estimates,
        group_sizes,
        corruption,
    })
}

/// Per-observable accept rates from a stream of direct outcomes.
pub fn estimates_from_outcomes(outcomes: &[DirectOutcome], m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut sums = vec![0u64; m];
    let mut counts = vec![0u64; m];
    for o in outcomes {
        if o.observable_index >= m {
            return Err(Error::InvalidArgument(format!(
                "outcome references observable {} of {m}",
                o.observable_index
            )));
        }
        sums[o.observable_index] += u64::from(o.bit);
        counts[o.observable_index] += 1;
    }
    if let Some(g) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!(
            "observable {g} received no outcomes"
        )));
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| s as f64 / c as f64)
        .collect())
}
