//! Full-state estimation by minimax selection over a covering net.
//!
//! The reduction runs in three stages: build a finite net of low-rank
//! candidate states that covers the target set in trace distance; attach to
//! every ordered pair of candidates its Holevo–Helstrom distinguishing
//! observable (the projector achieving the trace distance); estimate each
//! observable's expectation from the corrupted sample stream with a robust
//! estimator and pick the candidate whose own predictions best match the
//! estimates (Yatracos-style minimum-distance selection). The winner is
//! within a constant factor of the best net member even when a bounded
//! fraction of the samples is adversarial.
//!
//! Trace distance is normalized as half the trace norm throughout.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::parallel;
use crate::quantum::{
    haar_pure_state, hermitian_eigen, random_rank_r_state, trace_distance, DensityMatrix,
    Observable, PureState,
};
use crate::robust_stats::truncated_mean_in_place;
use crate::seeding::{derive_seed, stream};
use crate::shadows::ShadowSample;
use crate::{Error, Result};

/// Eigenvalues below this magnitude count as zero when projecting.
const EIGEN_TOL: f64 = 1e-9;

/// Hard ceiling on greedy packing, guarding against runaway net sizes.
const PACKING_CAP: usize = 200_000;

/// Number of random probe states used to audit a subsampled net.
const PROBE_COUNT: usize = 1000;

/// How a net's member list was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum NetConstruction {
    /// Exact enumeration of the weight grid.
    Grid,
    /// Uniform subsample of an enumeration that exceeded the cap.
    RandomSubsample { size: usize },
}

/// Empirical coverage audit: nearest-member trace distances for random
/// rank-`r` probe states.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CoverageProbe {
    pub n_probes: usize,
    /// Largest nearest-member trace distance seen over the probes.
    pub worst_distance: f64,
    /// Average nearest-member trace distance.
    pub mean_distance: f64,
}

/// Tuning knobs for covering-net construction.
#[derive(Clone, Copy, Debug)]
pub struct NetOptions {
    /// Largest exact enumeration returned as-is; beyond it the construction
    /// switches to uniform subsampling (or errors, per `allow_subsample`).
    pub cap: usize,
    /// Permit the subsampling fallback instead of failing on overflow.
    pub allow_subsample: bool,
    /// Seed for the packing, subsampling, and probe streams.
    pub seed: u64,
}

impl Default for NetOptions {
    fn default() -> Self {
        Self {
            cap: 100_000,
            allow_subsample: true,
            seed: 0,
        }
    }
}

/// A finite set of density matrices covering the rank-≤-r states at
/// resolution `epsilon` in trace distance.
#[derive(Clone, Debug)]
pub struct CoveringNet {
    pub states: Vec<DensityMatrix>,
    pub epsilon: f64,
    pub construction: NetConstruction,
    /// Present on subsampled nets: the empirical coverage audit.
    pub probe: Option<CoverageProbe>,
}

impl CoveringNet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, DensityMatrix::dim)
    }

    /// Serializable form with matrices flattened row-major as `[re, im]`
    /// pairs.
    pub fn wire(&self) -> CoveringNetWire {
        CoveringNetWire {
            dim: self.dim(),
            states: self
                .states
                .iter()
                .map(|s| matrix_to_wire(s.matrix()))
                .collect(),
            epsilon: self.epsilon,
            construction: self.construction,
            probe: self.probe,
        }
    }

    /// Rebuild from the wire form, revalidating every state.
    pub fn from_wire(wire: &CoveringNetWire) -> Result<Self> {
        let states = wire
            .states
            .iter()
            .map(|flat| DensityMatrix::new(matrix_from_wire(wire.dim, flat)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            states,
            epsilon: wire.epsilon,
            construction: wire.construction,
            probe: wire.probe,
        })
    }
}

/// JSON layout of a [`CoveringNet`]: each state is its `dim * dim` matrix
/// flattened row-major, every entry a `[re, im]` pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoveringNetWire {
    pub dim: usize,
    pub states: Vec<Vec<[f64; 2]>>,
    pub epsilon: f64,
    pub construction: NetConstruction,
    pub probe: Option<CoverageProbe>,
}

fn matrix_to_wire(m: &DMatrix<C64>) -> Vec<[f64; 2]> {
    let d = m.nrows();
    let mut flat = Vec::with_capacity(d * d);
    for row in 0..d {
        for col in 0..d {
            let z = m[(row, col)];
            flat.push([z.re, z.im]);
        }
    }
    flat
}

fn matrix_from_wire(d: usize, flat: &[[f64; 2]]) -> Result<DMatrix<C64>> {
    if flat.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            got: flat.len(),
        });
    }
    Ok(DMatrix::from_fn(d, d, |row, col| {
        let [re, im] = flat[row * d + col];
        C64::new(re, im)
    }))
}

/// A distinguishing observable for the ordered net pair `(i, j)`.
#[derive(Clone, Debug)]
pub struct HHObservablePair {
    pub i: usize,
    pub j: usize,
    pub observable: Observable,
}

/// Build a finite set of unit vectors covering the pure states: every
/// Haar-random probe lands within phase-aligned l2 distance `eps_net / 4`
/// of some member.
///
/// `d = 2` uses a deterministic latitude/longitude grid on the Bloch sphere
/// with angular spacing `eps_net / 4` (l2 spacing `eps_net / 8`); higher
/// dimensions greedily pack Haar samples at radius `eps_net / 8`, stopping
/// after `10 d / eps_net` consecutive rejections.
pub fn build_pure_net(d: usize, eps_net: f64, seed: u64) -> Result<Vec<PureState>> {
    if !(eps_net > 0.0 && eps_net <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "net resolution {eps_net} must lie in (0, 1]"
        )));
    }
    if !(crate::quantum::MIN_DIM..=crate::quantum::MAX_DIM).contains(&d) {
        return Err(Error::InvalidDimension {
            dim: d,
            min: crate::quantum::MIN_DIM,
            max: crate::quantum::MAX_DIM,
        });
    }
    if d == 1 {
        let one = nalgebra::DVector::from_vec(vec![C64::new(1.0, 0.0)]);
        return Ok(vec![PureState::new(one)?]);
    }
    if d == 2 {
        // Bloch angles: |psi> = (cos(theta/2), e^{i phi} sin(theta/2)); an
        // angular step `alpha` moves the state by l2 distance ~ alpha / 2.
        let alpha = eps_net / 4.0;
        let mut states = Vec::new();
        let mut ring = 0usize;
        loop {
            let theta = (ring as f64 + 0.5) * alpha;
            if theta >= std::f64::consts::PI {
                break;
            }
            let n_phi = ((2.0 * std::f64::consts::PI * theta.sin() / alpha).ceil() as usize).max(1);
            for k in 0..n_phi {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64;
                let amps = nalgebra::DVector::from_vec(vec![
                    C64::new((theta / 2.0).cos(), 0.0),
                    C64::from_polar((theta / 2.0).sin(), phi),
                ]);
                states.push(PureState::new(amps)?);
            }
            ring += 1;
        }
        return Ok(states);
    }
    // greedy packing: keep candidates farther than eps_net/8 from all kept
    let radius = eps_net / 8.0;
    // dist^2 = 2 - 2|<u|v>|  =>  dist > radius  <=>  |<u|v>|^2 < threshold
    let overlap_cap = (1.0 - radius * radius / 2.0).powi(2);
    let stop_after = (10.0 * d as f64 / eps_net).ceil() as usize;
    let mut rng = stream(seed, &[d as u64]);
    let mut kept: Vec<PureState> = Vec::new();
    let mut rejections = 0usize;
    while rejections < stop_after && kept.len() < PACKING_CAP {
        let cand = haar_pure_state(d, &mut rng)?;
        if kept.iter().all(|v| cand.overlap_sq(v) < overlap_cap) {
            kept.push(cand);
            rejections = 0;
        } else {
            rejections += 1;
        }
    }
    Ok(kept)
}

/// Number of positive-integer vectors of each length and total, used to
/// enumerate and uniformly sample weight assignments.
///
/// `ways[s][t]` counts length-`s` vectors with entries in `1..=levels`
/// summing to `t`.
fn weight_count_table(max_len: usize, levels: usize) -> Vec<Vec<u64>> {
    let max_total = levels; // totals beyond `levels` violate the sum cap
    let mut ways = vec![vec![0u64; max_total + 1]; max_len + 1];
    ways[0][0] = 1;
    for s in 1..=max_len {
        for t in 0..=max_total {
            let mut acc = 0u64;
            for v in 1..=levels.min(t) {
                acc += ways[s - 1][t - v];
            }
            ways[s][t] = acc;
        }
    }
    ways
}

/// `C(n, k)` as a float (exact for the sizes compared against the cap).
fn binomial_f64(n: usize, k: usize) -> f64 {
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Visit all `k`-subsets of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut idx: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return Ok(());
    }
    loop {
        f(&idx)?;
        // advance to the next combination
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            if idx[pos] < n - (k - pos) {
                idx[pos] += 1;
                for later in pos + 1..k {
                    idx[later] = idx[later - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Visit all length-`s` weight-level vectors with entries in `1..=levels`
/// and totals in `[t_min, t_max]`.
fn for_each_weight_vector(
    s: usize,
    levels: usize,
    t_min: usize,
    t_max: usize,
    f: &mut impl FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    fn recurse(
        buf: &mut Vec<usize>,
        s: usize,
        levels: usize,
        t_min: usize,
        t_max: usize,
        sum: usize,
        f: &mut impl FnMut(&[usize]) -> Result<()>,
    ) -> Result<()> {
        if buf.len() == s {
            if sum >= t_min {
                f(buf)?;
            }
            return Ok(());
        }
        let remaining = s - buf.len();
        for v in 1..=levels {
            let new_sum = sum + v;
            // prune: minimal/maximal achievable totals from here
            if new_sum + (remaining - 1) > t_max {
                break;
            }
            if new_sum + (remaining - 1) * levels < t_min {
                continue;
            }
            buf.push(v);
            recurse(buf, s, levels, t_min, t_max, new_sum, f)?;
            buf.pop();
        }
        Ok(())
    }
    let mut buf = Vec::with_capacity(s);
    recurse(&mut buf, s, levels, t_min, t_max, 0, f)
}

/// Draw a uniformly random weight vector of length `s` with total in
/// `[t_min, t_max]`, walking the count table backwards.
fn sample_weight_vector<R: Rng + ?Sized>(
    s: usize,
    levels: usize,
    t_min: usize,
    t_max: usize,
    ways: &[Vec<u64>],
    rng: &mut R,
) -> Vec<usize> {
    let total_choices: u64 = (t_min..=t_max).map(|t| ways[s][t]).sum();
    let mut pick = rng.gen_range(0..total_choices);
    let mut target = t_min;
    #[allow(clippy::needless_range_loop)]
    for t in t_min..=t_max {
        if pick < ways[s][t] {
            target = t;
            break;
        }
        pick -= ways[s][t];
    }
    let mut out = Vec::with_capacity(s);
    let mut remaining = target;
    for pos in (1..=s).rev() {
        // entry v is consistent iff ways[pos-1][remaining - v] > 0
        let mut choice = rng.gen_range(0..ways[pos][remaining]);
        for v in 1..=levels.min(remaining) {
            let below = ways[pos - 1][remaining - v];
            if choice < below {
                out.push(v);
                remaining -= v;
                break;
            }
            choice -= below;
        }
    }
    out
}

/// Mixture of the selected pure states with integer weight levels
/// (normalization cancels the grid step).
fn mixture_state(pure: &[PureState], subset: &[usize], weights: &[usize]) -> Result<DensityMatrix> {
    let d = pure[subset[0]].dim();
    let total: usize = weights.iter().sum();
    let mut mat = DMatrix::<C64>::zeros(d, d);
    for (&idx, &w) in subset.iter().zip(weights) {
        let amps = pure[idx].amplitudes();
        let scale = w as f64 / total as f64;
        for row in 0..d {
            for col in 0..d {
                mat[(row, col)] += amps[row] * amps[col].conj() * C64::new(scale, 0.0);
            }
        }
    }
    DensityMatrix::new(mat)
}

/// Build a covering net for states of rank at most `r`: mixtures of pure-net
/// members with weights on the grid `(epsilon / 4r) Z`, total weight within
/// `epsilon / 4` of one.
///
/// Exact enumeration is returned when it fits in `opts.cap`; otherwise the
/// construction uniformly subsamples `opts.cap` members and audits coverage
/// with random rank-`r` probes (or fails with a size overflow when
/// subsampling is not permitted).
pub fn build_covering_net(
    d: usize,
    r: usize,
    epsilon: f64,
    opts: &NetOptions,
) -> Result<CoveringNet> {
    if r == 0 || r > d {
        return Err(Error::InvalidArgument(format!(
            "rank bound {r} must lie in 1..={d}"
        )));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "net resolution {epsilon} must lie in (0, 1]"
        )));
    }
    if opts.cap == 0 {
        return Err(Error::InvalidArgument("net cap must be positive".into()));
    }
    let pure = build_pure_net(d, epsilon, derive_seed(opts.seed, &[1]))?;
    let p = pure.len();

    // weight grid: levels t = 1..=levels encode lambda = t * (epsilon/4r),
    // with the total lambda in [1 - epsilon/4, 1]
    let grid_step = epsilon / (4.0 * r as f64);
    let levels = (1.0 / grid_step + 1e-9).floor() as usize;
    let t_min = (((1.0 - epsilon / 4.0) / grid_step) - 1e-9).ceil() as usize;
    let t_max = levels;

    if p < r {
        return Err(Error::InvalidArgument(format!(
            "pure net of {p} states cannot support rank-{r} mixtures"
        )));
    }

    if r == 1 {
        // every admissible single weight normalizes to the same projector,
        // so the net is exactly the pure net
        if p <= opts.cap {
            let states = pure
                .iter()
                .map(projector_state)
                .collect::<Result<Vec<_>>>()?;
            return Ok(CoveringNet {
                states,
                epsilon,
                construction: NetConstruction::Grid,
                probe: None,
            });
        }
        if !opts.allow_subsample {
            return Err(Error::SizeOverflow {
                estimated: p,
                cap: opts.cap,
            });
        }
        let mut rng = stream(opts.seed, &[2]);
        let chosen = sample_indices(&mut rng, p, opts.cap);
        let mut states = Vec::with_capacity(opts.cap);
        for idx in chosen.iter() {
            states.push(projector_state(&pure[idx])?);
        }
        let probe = probe_coverage(&states, d, r, derive_seed(opts.seed, &[3]))?;
        return Ok(CoveringNet {
            states,
            epsilon,
            construction: NetConstruction::RandomSubsample { size: opts.cap },
            probe: Some(probe),
        });
    }

    let ways = weight_count_table(r, levels);
    let weight_totals: Vec<u64> = (0..=r)
        .map(|s| (t_min..=t_max).map(|t| ways[s][t]).sum())
        .collect();
    let exact_total: f64 = (1..=r)
        .map(|s| binomial_f64(p, s) * weight_totals[s] as f64)
        .sum();

    if exact_total <= opts.cap as f64 {
        let mut states = Vec::new();
        for s in 1..=r {
            for_each_subset(p, s, |subset| {
                for_each_weight_vector(s, levels, t_min, t_max, &mut |weights| {
                    states.push(mixture_state(&pure, subset, weights)?);
                    Ok(())
                })
            })?;
        }
        return Ok(CoveringNet {
            states,
            epsilon,
            construction: NetConstruction::Grid,
            probe: None,
        });
    }
    if !opts.allow_subsample {
        return Err(Error::SizeOverflow {
            estimated: exact_total as usize,
            cap: opts.cap,
        });
    }

    // uniform subsample: pick the subset size in proportion to its share of
    // the enumeration, then a uniform subset and weight vector within it
    let size_weights: Vec<f64> = (1..=r)
        .map(|s| binomial_f64(p, s) * weight_totals[s] as f64)
        .collect();
    let mut rng = stream(opts.seed, &[2]);
    let mut states = Vec::with_capacity(opts.cap);
    for _ in 0..opts.cap {
        let s = 1 + crate::quantum::sample_index(&size_weights, exact_total, &mut rng);
        let mut subset: Vec<usize> = sample_indices(&mut rng, p, s).into_vec();
        subset.sort_unstable();
        let weights = sample_weight_vector(s, levels, t_min, t_max, &ways, &mut rng);
        states.push(mixture_state(&pure, &subset, &weights)?);
    }
    let probe = probe_coverage(&states, d, r, derive_seed(opts.seed, &[3]))?;
    Ok(CoveringNet {
        states,
        epsilon,
        construction: NetConstruction::RandomSubsample { size: opts.cap },
        probe: Some(probe),
    })
}

fn projector_state(phi: &PureState) -> Result<DensityMatrix> {
    DensityMatrix::new(phi.projector())
}

/// Audit a net: nearest-member trace distance for random rank-`r` probes.
fn probe_coverage(
    states: &[DensityMatrix],
    d: usize,
    r: usize,
    seed: u64,
) -> Result<CoverageProbe> {
    let mut rng = stream(seed, &[0]);
    let mut worst = 0.0f64;
    let mut sum = 0.0f64;
    for _ in 0..PROBE_COUNT {
        let probe = random_rank_r_state(d, r, &mut rng)?;
        let mut nearest = f64::INFINITY;
        for member in states {
            let dist = trace_distance(&probe, member)?;
            if dist < nearest {
                nearest = dist;
            }
        }
        worst = worst.max(nearest);
        sum += nearest;
    }
    Ok(CoverageProbe {
        n_probes: PROBE_COUNT,
        worst_distance: worst,
        mean_distance: sum / PROBE_COUNT as f64,
    })
}

/// The two-outcome observable that optimally distinguishes `rho_i` from
/// `rho_j`: the projector onto the strictly positive eigenspace of their
/// difference.
///
/// Its expectation gap `Tr[O (rho_i - rho_j)]` equals the trace distance,
/// and its Hilbert–Schmidt norm is at most `sqrt(rank_i + rank_j)`.
pub fn holevo_helstrom(rho_i: &DensityMatrix, rho_j: &DensityMatrix) -> Result<Observable> {
    if rho_i.dim() != rho_j.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho_i.dim(),
            got: rho_j.dim(),
        });
    }
    let d = rho_i.dim();
    let diff = rho_i.matrix() - rho_j.matrix();
    let (evals, evecs) = hermitian_eigen(&diff);
    let mut proj = DMatrix::<C64>::zeros(d, d);
    for (k, &lambda) in evals.iter().enumerate() {
        if lambda > EIGEN_TOL {
            let u = evecs.column(k);
            for row in 0..d {
                for col in 0..d {
                    proj[(row, col)] += u[row] * u[col].conj();
                }
            }
        }
    }
    Observable::new(proj)
}

/// Construct the distinguishing observable for every ordered pair of net
/// members (each pair independently; no symmetry reuse).
pub fn helstrom_pairs(net: &CoveringNet) -> Result<Vec<HHObservablePair>> {
    let m = net.len();
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    let n_pairs = m * (m - 1);
    parallel::try_map_indexed(n_pairs, |p| {
        let i = p / (m - 1);
        let rem = p % (m - 1);
        let j = rem + usize::from(rem >= i);
        Ok(HHObservablePair {
            i,
            j,
            observable: holevo_helstrom(&net.states[i], &net.states[j])?,
        })
    })
}

/// Predicted and estimated expectations for every ordered net pair, stored
/// row-major with zero diagonals.
///
/// `predicted[i * m + j]` is the candidate's own value `Tr[O_{i,j} rho_j]`;
/// `estimated[i * m + j]` is the robust estimate of `Tr[O_{i,j} rho]` from
/// the sample stream.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateTable {
    pub m: usize,
    pub predicted: Vec<f64>,
    pub estimated: Vec<f64>,
}

impl EstimateTable {
    /// Worst disagreement of candidate `l` across its incoming pairs.
    pub fn defect(&self, l: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.m {
            if i == l {
                continue;
            }
            let idx = i * self.m + l;
            worst = worst.max((self.predicted[idx] - self.estimated[idx]).abs());
        }
        worst
    }
}

/// Per-sample real feature vector: `d` amplitude squares followed by the
/// real and imaginary parts of each upper-triangle cross term, so every
/// observable expectation becomes a dot product with a fixed weight vector.
fn sample_features(d: usize, vector: &PureState, out: &mut Vec<f64>) {
    let amps = vector.amplitudes();
    for j in 0..d {
        out.push(amps[j].norm_sqr());
    }
    for j in 0..d {
        for k in j + 1..d {
            let cross = amps[j].conj() * amps[k];
            out.push(cross.re);
            out.push(cross.im);
        }
    }
}

/// Weight vector dual to [`sample_features`]: `w . f = <v|O|v>`.
fn observable_weights(obs: &Observable) -> Vec<f64> {
    let d = obs.dim();
    let mat = obs.matrix();
    let mut w = Vec::with_capacity(d * d);
    for j in 0..d {
        w.push(mat[(j, j)].re);
    }
    for j in 0..d {
        for k in j + 1..d {
            let z = mat[(j, k)];
            w.push(2.0 * z.re);
            w.push(-2.0 * z.im);
        }
    }
    w
}

/// Fill the pair table: predicted values from the net, estimated values from
/// the samples via a truncated mean dropping a `trim` fraction per side.
///
/// Per-sample features are computed once and shared across all pairs, so
/// each (pair, sample) costs one short dot product. `trim = 0` collapses to
/// a single mean feature vector per table.
pub fn estimate_table(
    samples: &[ShadowSample],
    net: &CoveringNet,
    pairs: &[HHObservablePair],
    trim: f64,
) -> Result<EstimateTable> {
    let m = net.len();
    if m == 0 || pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d = net.dim();
    if samples[0].vector.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: samples[0].vector.dim(),
        });
    }
    let n = samples.len();
    let width = d * d;
    let mut features = Vec::with_capacity(n * width);
    for s in samples {
        sample_features(d, &s.vector, &mut features);
    }
    // mean feature vector: sufficient statistic for the untrimmed mean
    let mut mean_f = vec![0.0f64; width];
    for row in features.chunks_exact(width) {
        for (acc, &v) in mean_f.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for acc in mean_f.iter_mut() {
        *acc /= n as f64;
    }
    let scale = d as f64 + 1.0;

    let cells = parallel::try_map_slice(pairs, |pair| {
        let w = observable_weights(&pair.observable);
        let offset = pair.observable.trace();
        let predicted = pair.observable.expectation(&net.states[pair.j])?;
        let estimated = if trim == 0.0 {
            let dot: f64 = w.iter().zip(&mean_f).map(|(a, b)| a * b).sum();
            scale * dot - offset
        } else {
            let mut values: Vec<f64> = features
                .chunks_exact(width)
                .map(|row| {
                    let dot: f64 = w.iter().zip(row).map(|(a, b)| a * b).sum();
                    scale * dot - offset
                })
                .collect();
            truncated_mean_in_place(&mut values, trim)?
        };
        Ok((pair.i, pair.j, predicted, estimated))
    })?;

    let mut table = EstimateTable {
        m,
        predicted: vec![0.0; m * m],
        estimated: vec![0.0; m * m],
    };
    for (i, j, predicted, estimated) in cells {
        table.predicted[i * m + j] = predicted;
        table.estimated[i * m + j] = estimated;
    }
    Ok(table)
}

/// Select the net member whose predicted pair values best match the
/// estimates: the minimizer of the worst per-pair disagreement, ties broken
/// toward the smallest index.
pub fn yatracos_select(table: &EstimateTable) -> Result<usize> {
    if table.m == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut best = 0usize;
    let mut best_defect = f64::INFINITY;
    for l in 0..table.m {
        let defect = table.defect(l);
        if defect < best_defect {
            best = l;
            best_defect = defect;
        }
    }
    Ok(best)
}

/// Result of the full selection pipeline.
#[derive(Clone, Debug)]
pub struct TomographyOutcome {
    /// Index of the winning net member.
    pub selected: usize,
    /// The winning state.
    pub estimate: DensityMatrix,
    /// The winner's worst pair disagreement.
    pub max_defect: f64,
    /// The net the selection ran over.
    pub net: CoveringNet,
}

/// Full-state estimation from a (possibly corrupted) shadow-sample stream:
/// cover the rank-≤-r states at resolution `epsilon / 5`, estimate every
/// ordered-pair observable with a truncated mean trimming `2 * gamma` per
/// side, and return the minimax selection.
///
/// With per-observable error at most `epsilon / 5`, the winner is within
/// trace distance `epsilon` of the true state.
pub fn robust_tomography(
    samples: &[ShadowSample],
    d: usize,
    r: usize,
    epsilon: f64,
    gamma: f64,
    opts: &NetOptions,
) -> Result<TomographyOutcome> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if samples[0].vector.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: samples[0].vector.dim(),
        });
    }
    if !(0.0..0.25).contains(&gamma) {
        return Err(Error::InvalidBudget {
            budget: gamma,
            reason: "corruption fraction must lie in [0, 0.25) so the trim stays below 1/2".into(),
        });
    }
    let net = build_covering_net(d, r, epsilon / 5.0, opts)?;
    let pairs = helstrom_pairs(&net)?;
    let table = estimate_table(samples, &net, &pairs, 2.0 * gamma)?;
    let selected = yatracos_select(&table)?;
    Ok(TomographyOutcome {
        selected,
        estimate: net.states[selected].clone(),
        max_defect: table.defect(selected),
        net,
    })
}
