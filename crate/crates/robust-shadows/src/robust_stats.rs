//! Outlier-robust location estimators, discrete distributions, and
//! goodness-of-fit helpers.
//!
//! The removing-corruption model drives the estimator designs: an adversary
//! may delete up to a `gamma` fraction of honest samples and substitute
//! arbitrary values, so location estimates must ignore extreme order
//! statistics. Both the symmetric truncated mean and the median of batch
//! means are provided, together with the exact worst-case mean shift
//! achievable against a known discrete distribution by mass removal.

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::quantum::sample_index;
use crate::{Error, Result};

/// A validated batch of finite sample values.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    values: Vec<f64>,
}

impl SampleBatch {
    /// Validate that the batch is nonempty and every value is finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NumericIntegrity {
                context: "sample batch contains a non-finite value".into(),
                value: bad,
            });
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Consume the batch, yielding the raw values for in-place estimators.
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Number of values cut from each side at trimming fraction `trim`.
fn trim_cut(n: usize, trim: f64) -> usize {
    (trim * n as f64 + 1e-9).floor() as usize
}

/// Symmetric truncated mean: drop the `floor(trim * n)` smallest and largest
/// values, average the rest. `trim = 0` reduces to the empirical mean.
pub fn truncated_mean(batch: &SampleBatch, trim: f64) -> Result<f64> {
    let mut owned = batch.values().to_vec();
    truncated_mean_in_place(&mut owned, trim)
}

/// In-place variant of [`truncated_mean`]; reorders `values` via quickselect
/// instead of sorting or cloning.
pub(crate) fn truncated_mean_in_place(values: &mut [f64], trim: f64) -> Result<f64> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if !(0.0..0.5).contains(&trim) {
        return Err(Error::InvalidBudget {
            budget: trim,
            reason: "trim fraction must lie in [0, 0.5)".into(),
        });
    }
    let cut = trim_cut(n, trim);
    if 2 * cut >= n {
        return Err(Error::InvalidBudget {
            budget: trim,
            reason: format!("trimming {cut} per side empties a batch of {n}"),
        });
    }
    if cut > 0 {
        values.select_nth_unstable_by(cut - 1, f64::total_cmp);
        let upper = &mut values[cut..];
        let keep = upper.len() - cut;
        upper.select_nth_unstable_by(keep - 1, f64::total_cmp);
    }
    let kept = &values[cut..n - cut];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Median of batch means at batch size `k`: split the first
/// `floor(n/k) * k` values into `floor(n/k)` contiguous batches of `k`,
/// average each, and take the median of the batch means (midpoint of the
/// central pair when the batch count is even). `k = n` reduces to the
/// empirical mean.
pub fn median_of_means(batch: &SampleBatch, k: usize) -> Result<f64> {
    median_of_means_slice(batch.values(), k)
}

/// Slice-level implementation of [`median_of_means`].
pub(crate) fn median_of_means_slice(values: &[f64], k: usize) -> Result<f64> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "batch size {k} must lie in 1..={n}"
        )));
    }
    let batches = n / k;
    let mut means: Vec<f64> = (0..batches)
        .map(|i| {
            let chunk = &values[i * k..(i + 1) * k];
            chunk.iter().sum::<f64>() / k as f64
        })
        .collect();
    let mid = batches / 2;
    if batches % 2 == 1 {
        let (_, m, _) = means.select_nth_unstable_by(mid, f64::total_cmp);
        Ok(*m)
    } else {
        let (lower, m, _) = means.select_nth_unstable_by(mid, f64::total_cmp);
        let hi = *m;
        let lo = lower
            .iter()
            .copied()
            .max_by(f64::total_cmp)
            .expect("batch count >= 2 when even");
        Ok(0.5 * (lo + hi))
    }
}

/// Default median-of-means batch size `max(1, n / 7)`: seven batches, sized
/// so the batch-median failure probability is about 1%.
pub fn default_batch_size(n: usize) -> usize {
    (n / 7).max(1)
}

/// Empirical quantile: the `ceil(q * n)`-th smallest value (1-indexed), with
/// a small guard so exact multiples are not pushed to the next index.
pub fn quantile(batch: &SampleBatch, q: f64) -> Result<f64> {
    quantile_slice(batch.values(), q)
}

/// Slice-level implementation of [`quantile`].
pub(crate) fn quantile_slice(values: &[f64], q: f64) -> Result<f64> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "quantile level {q} must lie in [0, 1]"
        )));
    }
    let idx = ((q * n as f64 - 1e-9).ceil() as isize - 1).max(0) as usize;
    let mut owned = values.to_vec();
    let (_, v, _) = owned.select_nth_unstable_by(idx.min(n - 1), f64::total_cmp);
    Ok(*v)
}

/// A finite discrete distribution with strictly increasing support.
#[derive(Clone, Debug)]
pub struct DiscreteDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Validate support ordering and probability normalization (within
    /// `1e-12`, then renormalized exactly).
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if support.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                got: probs.len(),
            });
        }
        if support.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("support must be finite".into()));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "support must be strictly increasing".into(),
            ));
        }
        let mut probs = probs;
        for p in probs.iter_mut() {
            if !p.is_finite() || *p < -1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "probability {p} is negative or non-finite"
                )));
            }
            *p = p.max(0.0);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        for p in probs.iter_mut() {
            *p /= total;
        }
        Ok(Self { support, probs })
    }

    /// Two-point distribution on `{0, 1}` with `P(1) = p`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "success probability {p} must lie in [0, 1]"
            )));
        }
        Self::new(vec![0.0, 1.0], vec![1.0 - p, p])
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| x * p)
            .sum()
    }

    /// Central moment `E[(X - E X)^h]`.
    pub fn central_moment(&self, h: usize) -> f64 {
        let mu = self.mean();
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| (x - mu).powi(h as i32) * p)
            .sum()
    }

    /// Total variation distance to another distribution on the same support.
    pub fn tv_distance(&self, other: &Self) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        if self
            .support
            .iter()
            .zip(&other.support)
            .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::InvalidArgument(
                "distributions have different supports".into(),
            ));
        }
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>())
    }

    /// Draw a support index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.probs, 1.0, rng)
    }
}

/// Which way an adversary wants to move the mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftDirection {
    Up,
    Down,
}

/// Result of the worst-case mass-removal attack on a known distribution.
#[derive(Clone, Copy, Debug)]
pub struct RemovedShift {
    /// Mean of the renormalized distribution after removal.
    pub mean: f64,
    /// Probability mass actually removed.
    pub removed_mass: f64,
}

/// Exact worst-case mean after an adversary deletes up to `xi < 1/2`
/// probability mass and the remainder is renormalized.
///
/// The optimum is greedy: delete mass from the lowest support points to push
/// the mean up, from the highest to push it down, splitting one point
/// fractionally when the budget runs out.
pub fn worst_case_removing_shift(
    dist: &DiscreteDistribution,
    xi: f64,
    direction: ShiftDirection,
) -> Result<RemovedShift> {
    if !(0.0..0.5).contains(&xi) {
        return Err(Error::InvalidBudget {
            budget: xi,
            reason: "removable mass must lie in [0, 0.5)".into(),
        });
    }
    let n = dist.len();
    let order: Vec<usize> = match direction {
        ShiftDirection::Up => (0..n).collect(),
        ShiftDirection::Down => (0..n).rev().collect(),
    };
    let mut remaining = dist.probs.clone();
    let mut budget = xi;
    for &i in &order {
        if budget <= 0.0 {
            break;
        }
        let take = remaining[i].min(budget);
        remaining[i] -= take;
        budget -= take;
    }
    let removed = xi - budget.max(0.0);
    let kept: f64 = remaining.iter().sum();
    let mean = dist
        .support
        .iter()
        .zip(&remaining)
        .map(|(x, p)| x * p)
        .sum::<f64>()
        / kept;
    Ok(RemovedShift {
        mean,
        removed_mass: removed,
    })
}

/// Upper bound `(h / (h-1)) * xi^(1 - 1/h)` on the mean shift achievable by
/// removing `xi < 1/2` mass from any distribution whose h-th central moment
/// is at most one.
pub fn removing_shift_bound(h: usize, xi: f64) -> Result<f64> {
    if h < 2 {
        return Err(Error::UnsupportedOrder { order: h, max: usize::MAX });
    }
    if !(0.0..0.5).contains(&xi) {
        return Err(Error::InvalidBudget {
            budget: xi,
            reason: "removable mass must lie in [0, 0.5)".into(),
        });
    }
    let hf = h as f64;
    Ok(hf / (hf - 1.0) * xi.powf(1.0 - 1.0 / hf))
}

/// A chi-square test result.
#[derive(Clone, Copy, Debug)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square goodness-of-fit of observed `counts` against expected
/// cell probabilities `probs` (which must be positive and sum to one).
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<ChiSquareOutcome> {
    if counts.len() < 2 {
        return Err(Error::InvalidArgument(
            "chi-square needs at least two cells".into(),
        ));
    }
    if counts.len() != probs.len() {
        return Err(Error::DimensionMismatch {
            expected: counts.len(),
            got: probs.len(),
        });
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyBatch);
    }
    let p_sum: f64 = probs.iter().sum();
    if (p_sum - 1.0).abs() > 1e-9 || probs.iter().any(|&p| p <= 0.0) {
        return Err(Error::InvalidArgument(
            "cell probabilities must be positive and sum to 1".into(),
        ));
    }
    let n = total as f64;
    let statistic: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = n * p;
            let diff = c as f64 - e;
            diff * diff / e
        })
        .sum();
    let dof = counts.len() - 1;
    finish_chi_square(statistic, dof)
}

/// Two-sample chi-square homogeneity test on aligned histograms.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<ChiSquareOutcome> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::EmptyBatch);
    }
    let mut statistic = 0.0;
    let mut used_cells = 0usize;
    for (&ca, &cb) in a.iter().zip(b) {
        let cell = (ca + cb) as f64;
        if cell == 0.0 {
            continue;
        }
        used_cells += 1;
        let ea = na * cell / (na + nb);
        let eb = nb * cell / (na + nb);
        statistic += (ca as f64 - ea).powi(2) / ea + (cb as f64 - eb).powi(2) / eb;
    }
    if used_cells < 2 {
        return Err(Error::InvalidArgument(
            "two-sample chi-square needs at least two occupied cells".into(),
        ));
    }
    finish_chi_square(statistic, used_cells - 1)
}

fn finish_chi_square(statistic: f64, dof: usize) -> Result<ChiSquareOutcome> {
    let dist = ChiSquared::new(dof as f64).map_err(|e| {
        Error::InvalidArgument(format!("chi-square distribution setup failed: {e}"))
    })?;
    Ok(ChiSquareOutcome {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}
