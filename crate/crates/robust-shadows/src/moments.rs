//! Exact Haar moments of quadratic forms and moment-based tail bounds.
//!
//! For a Haar-random pure state `|u>` in dimension `d` and Hermitian `O`,
//! the k-th moment `E[<u|O|u>^k]` has a closed form: a sum over cycle types
//! of S_k of products of power traces `Tr[O^l]`, normalized by the rising
//! factorial `d (d+1) ... (d+k-1)`. This module evaluates that formula from
//! the cached eigendecomposition of `O`, and exposes the companion bound on
//! central moments of single-sample estimates used to size batch tails.

use crate::quantum::{DensityMatrix, Observable};
use crate::{Error, Result};

/// Largest supported moment order for exact evaluation and tail bounds.
pub const MAX_MOMENT_ORDER: usize = 8;

/// A conjugacy class of the symmetric group S_k, identified by its multiset
/// of cycle lengths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleType {
    /// Cycle lengths in non-increasing order, summing to `k`.
    pub cycle_lengths: Vec<usize>,
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

fn check_order(k: usize) -> Result<()> {
    if k == 0 || k > MAX_MOMENT_ORDER {
        return Err(Error::UnsupportedOrder {
            order: k,
            max: MAX_MOMENT_ORDER,
        });
    }
    Ok(())
}

/// All cycle types of S_k, each paired with its permutation count.
///
/// The count for a type with `m_l` cycles of length `l` is
/// `k! / prod_l (l^{m_l} * m_l!)`. Types are emitted in lexicographically
/// decreasing order of their cycle lengths, starting with the single k-cycle.
pub fn enumerate_permutation_cycle_types(k: usize) -> Result<Vec<(CycleType, u64)>> {
    check_order(k)?;
    let mut partitions = Vec::new();
    let mut current = Vec::new();
    collect_partitions(k, k, &mut current, &mut partitions);
    let k_fact = factorial(k);
    Ok(partitions
        .into_iter()
        .map(|cycle_lengths| {
            let mut denom = 1u64;
            let mut run = 0usize;
            let mut prev = 0usize;
            for &l in cycle_lengths.iter().chain(std::iter::once(&0)) {
                if l == prev {
                    run += 1;
                } else {
                    if prev != 0 {
                        denom *= (prev as u64).pow(run as u32) * factorial(run);
                    }
                    prev = l;
                    run = 1;
                }
            }
            (CycleType { cycle_lengths }, k_fact / denom)
        })
        .collect())
}

fn collect_partitions(
    remaining: usize,
    max_part: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if remaining == 0 {
        out.push(current.clone());
        return;
    }
    for part in (1..=remaining.min(max_part)).rev() {
        current.push(part);
        collect_partitions(remaining - part, part, current, out);
        current.pop();
    }
}

/// Exact `E[<u|O|u>^k]` over Haar-random pure states `|u>`.
///
/// Evaluates `sum_types count * prod_parts Tr[O^l]` divided by the rising
/// factorial `d (d+1) ... (d+k-1)`, using power sums of the eigenvalues.
pub fn exact_moment(obs: &Observable, k: usize) -> Result<f64> {
    check_order(k)?;
    let d = obs.dim();
    let evals = &obs.eigen().0;
    // power_traces[l] = Tr[O^l] for l in 1..=k
    let mut power_traces = vec![0.0f64; k + 1];
    #[allow(clippy::needless_range_loop)]
    for l in 1..=k {
        power_traces[l] = evals.iter().map(|&e| e.powi(l as i32)).sum();
    }
    let mut numerator = 0.0;
    for (ct, count) in enumerate_permutation_cycle_types(k)? {
        let product: f64 = ct.cycle_lengths.iter().map(|&l| power_traces[l]).product();
        numerator += count as f64 * product;
    }
    let mut rising = 1.0f64;
    for i in 0..k {
        rising *= (d + i) as f64;
    }
    Ok(numerator / rising)
}

/// Mean of the per-sample quadratic form under the shadow measurement
/// protocol: `E[<v|O|v>] = (Tr O + Tr[O rho]) / (d + 1)`.
pub fn shadow_mean(obs: &Observable, rho: &DensityMatrix) -> Result<f64> {
    let tr_o_rho = obs.expectation(rho)?;
    Ok((obs.trace() + tr_o_rho) / (obs.dim() as f64 + 1.0))
}

/// Upper bound on the h-th central moment of a single-sample estimate,
/// `(8 h |O|_HS / (d+1))^h`, valid for any `h >= 2`.
pub fn central_moment_bound(obs: &Observable, h: usize) -> Result<f64> {
    if h < 2 {
        return Err(Error::UnsupportedOrder {
            order: h,
            max: usize::MAX,
        });
    }
    let d = obs.dim() as f64;
    let base = 8.0 * h as f64 * obs.hs_norm() / (d + 1.0);
    Ok(base.powi(h as i32))
}
