//! States, observables, unitaries, and measurement primitives.
//!
//! Matrices are stored column-major (nalgebra `DMatrix<Complex64>`); the hot
//! sampling kernels (Ginibre fill, modified Gram–Schmidt orthonormalization,
//! quadratic forms) run over flat complex slices, while all Hermitian
//! eigendecompositions delegate to nalgebra's `SymmetricEigen`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::sync::OnceLock;

use crate::{Error, Result};

/// Smallest supported Hilbert-space dimension (`d = 1` is the degenerate
/// scalar case: its only unitaries are unit-modulus phases).
pub const MIN_DIM: usize = 1;
/// Largest supported Hilbert-space dimension (desk-scale simulations).
pub const MAX_DIM: usize = 64;

/// Entrywise tolerance for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Tolerance for unit trace and squared-norm checks.
pub const TRACE_TOL: f64 = 1e-10;
/// Entrywise tolerance for unitarity checks.
pub const UNITARY_TOL: f64 = 1e-9;
/// Eigenvalues above `-PSD_TOL` count as nonnegative.
pub const PSD_TOL: f64 = 1e-9;
/// Eigenvalues below this threshold count as zero rank.
pub const RANK_TOL: f64 = 1e-12;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn check_dim(dim: usize) -> Result<()> {
    if !(MIN_DIM..=MAX_DIM).contains(&dim) {
        return Err(Error::InvalidDimension {
            dim,
            min: MIN_DIM,
            max: MAX_DIM,
        });
    }
    Ok(())
}

fn check_square(m: &DMatrix<C64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    check_dim(m.nrows())?;
    Ok(m.nrows())
}

fn check_hermitian(m: &DMatrix<C64>) -> Result<()> {
    let d = m.nrows();
    let mut max_dev: f64 = 0.0;
    for i in 0..d {
        for j in i..d {
            let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
            max_dev = max_dev.max(dev);
        }
    }
    if max_dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian {
            max_dev,
            tol: HERMITIAN_TOL,
        });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as matching
/// columns. Delegates to nalgebra's symmetric (Hermitian) eigensolver and
/// sorts the output for deterministic downstream iteration.
pub(crate) fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let d = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let evals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut evecs = DMatrix::<C64>::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        evecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (evals, evecs)
}

// ---------------------------------------------------------------------------
// Hot kernels over flat column-major slices
// ---------------------------------------------------------------------------

/// Fill `out` with i.i.d. standard complex Gaussians (unit total variance).
pub(crate) fn ginibre_fill<R: Rng + ?Sized>(rng: &mut R, out: &mut [C64]) {
    for z in out.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z = C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2);
    }
}

/// In-place modified Gram–Schmidt on the `d` columns of a column-major `d x d`
/// slice.
///
/// Normalization makes every diagonal entry of the implicit triangular factor
/// positive, so applying this to a complex Ginibre matrix yields an exactly
/// Haar-distributed unitary: the usual per-column phase correction by
/// `r_jj / |r_jj|` is identically one here.
pub(crate) fn mgs_orthonormalize(d: usize, a: &mut [C64]) -> Result<()> {
    debug_assert_eq!(a.len(), d * d);
    for j in 0..d {
        let (head, tail) = a.split_at_mut(j * d);
        let col_j = &mut tail[..d];
        for i in 0..j {
            let col_i = &head[i * d..(i + 1) * d];
            let mut dot = C64::new(0.0, 0.0);
            for k in 0..d {
                dot += col_i[k].conj() * col_j[k];
            }
            for k in 0..d {
                col_j[k] -= dot * col_i[k];
            }
        }
        let norm_sq: f64 = col_j.iter().map(|z| z.norm_sqr()).sum();
        if norm_sq < 1e-280 {
            return Err(Error::NumericIntegrity {
                context: "Gram-Schmidt column collapsed to zero".into(),
                value: norm_sq,
            });
        }
        let inv = 1.0 / norm_sq.sqrt();
        for z in col_j.iter_mut() {
            *z *= inv;
        }
    }
    Ok(())
}

/// Real quadratic form `<v| M |v>` for Hermitian `M` (column-major slice).
pub(crate) fn hermitian_quad_form(m: &[C64], d: usize, v: &[C64]) -> f64 {
    debug_assert_eq!(m.len(), d * d);
    debug_assert_eq!(v.len(), d);
    let mut total = C64::new(0.0, 0.0);
    for j in 0..d {
        let col = &m[j * d..(j + 1) * d];
        let mut inner = C64::new(0.0, 0.0);
        for k in 0..d {
            inner += v[k].conj() * col[k];
        }
        total += inner * v[j];
    }
    total.re
}

// ---------------------------------------------------------------------------
// Core types
// ---------------------------------------------------------------------------

/// A unit-norm state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: DVector<C64>,
}

impl PureState {
    /// Validate and wrap a state vector (squared norm within `1e-10` of one).
    pub fn new(amps: DVector<C64>) -> Result<Self> {
        check_dim(amps.len())?;
        let norm_sq = amps.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if (norm_sq - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotNormalized {
                norm: norm_sq.sqrt(),
                tol: TRACE_TOL,
            });
        }
        Ok(Self { amps })
    }

    /// Wrap a vector known to be unit-norm by construction.
    pub(crate) fn new_unchecked(amps: DVector<C64>) -> Self {
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Squared overlap `|<self|other>|^2`.
    pub fn overlap_sq(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// The rank-one projector `|psi><psi|`.
    pub fn projector(&self) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.amps[i] * self.amps[j].conj())
    }
}

/// A validated density matrix with its eigendecomposition cached.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    mat: DMatrix<C64>,
    evals: Vec<f64>,
    evecs: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validate Hermiticity (`1e-10`), unit trace (`1e-10`), and positive
    /// semidefiniteness (eigenvalues above `-1e-9`), caching the spectrum.
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        check_square(&mat)?;
        check_hermitian(&mat)?;
        let trace: f64 = (0..mat.nrows()).map(|i| mat[(i, i)].re).sum();
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidTrace {
                trace,
                tol: TRACE_TOL,
            });
        }
        let (evals, evecs) = hermitian_eigen(&mat);
        if evals[0] < -PSD_TOL {
            return Err(Error::NotPositive { min_eig: evals[0] });
        }
        Ok(Self { mat, evals, evecs })
    }

    /// The pure density matrix `|psi><psi|`.
    pub fn from_pure(psi: &PureState) -> Result<Self> {
        Self::new(psi.projector())
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    /// Eigenvalues in ascending order (tiny negatives may appear within
    /// the validation tolerance).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.evals
    }

    /// Eigenvectors as columns, matching [`Self::eigenvalues`] order.
    pub fn eigenvectors(&self) -> &DMatrix<C64> {
        &self.evecs
    }

    /// Number of eigenvalues above the rank tolerance.
    pub fn rank(&self) -> usize {
        self.evals.iter().filter(|&&l| l > RANK_TOL).count()
    }
}

/// A Hermitian observable with cached trace, Hilbert–Schmidt norm, and a
/// lazily computed eigendecomposition.
#[derive(Debug)]
pub struct Observable {
    mat: DMatrix<C64>,
    trace: f64,
    hs_norm: f64,
    eigen: OnceLock<(Vec<f64>, DMatrix<C64>)>,
}

impl Clone for Observable {
    fn clone(&self) -> Self {
        Self {
            mat: self.mat.clone(),
            trace: self.trace,
            hs_norm: self.hs_norm,
            eigen: self.eigen.clone(),
        }
    }
}

impl Observable {
    /// Validate Hermiticity (`1e-10`) and cache trace and HS norm.
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        check_square(&mat)?;
        check_hermitian(&mat)?;
        let trace: f64 = (0..mat.nrows()).map(|i| mat[(i, i)].re).sum();
        let hs_norm: f64 = mat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        Ok(Self {
            mat,
            trace,
            hs_norm,
            eigen: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    /// Cached trace (reliable because construction validates Hermiticity).
    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// Cached Hilbert–Schmidt (Frobenius) norm.
    pub fn hs_norm(&self) -> f64 {
        self.hs_norm
    }

    /// Eigendecomposition (ascending), computed on first use and cached.
    pub fn eigen(&self) -> &(Vec<f64>, DMatrix<C64>) {
        self.eigen.get_or_init(|| hermitian_eigen(&self.mat))
    }

    /// `Tr[O rho]`.
    pub fn expectation(&self, rho: &DensityMatrix) -> Result<f64> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: rho.dim(),
            });
        }
        let d = self.dim();
        let o = self.mat.as_slice();
        let r = rho.mat.as_slice();
        let mut acc = 0.0;
        for j in 0..d {
            for i in 0..d {
                // Tr[O rho] = sum_{i,j} O[i,j] * rho[j,i]
                let prod = o[i + j * d] * r[j + i * d];
                acc += prod.re;
            }
        }
        Ok(acc)
    }

    /// `<psi| O |psi>`.
    pub fn expectation_pure(&self, psi: &PureState) -> Result<f64> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: psi.dim(),
            });
        }
        Ok(hermitian_quad_form(
            self.mat.as_slice(),
            self.dim(),
            psi.amplitudes().as_slice(),
        ))
    }
}

/// A validated unitary matrix.
#[derive(Clone, Debug)]
pub struct UnitaryMatrix {
    mat: DMatrix<C64>,
}

impl UnitaryMatrix {
    /// Validate `U^H U = I` entrywise within `1e-9`.
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        let d = check_square(&mat)?;
        let mut max_dev: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut dot = C64::new(0.0, 0.0);
                for k in 0..d {
                    dot += mat[(k, i)].conj() * mat[(k, j)];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                max_dev = max_dev.max((dot - C64::new(target, 0.0)).norm());
            }
        }
        if max_dev > UNITARY_TOL {
            return Err(Error::NotUnitary { max_dev });
        }
        Ok(Self { mat })
    }

    /// Wrap a matrix that is orthonormal by construction.
    pub(crate) fn new_unchecked(mat: DMatrix<C64>) -> Self {
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }
}

// ---------------------------------------------------------------------------
// Random generators
// ---------------------------------------------------------------------------

/// Sample a Haar-distributed `d x d` unitary.
///
/// Draws a complex Ginibre matrix and orthonormalizes its columns with
/// modified Gram–Schmidt; the positive-diagonal normalization makes the
/// distribution exactly Haar (see [`mgs_orthonormalize`]).
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<UnitaryMatrix> {
    check_dim(d)?;
    let mut a = vec![C64::new(0.0, 0.0); d * d];
    ginibre_fill(rng, &mut a);
    mgs_orthonormalize(d, &mut a)?;
    Ok(UnitaryMatrix::new_unchecked(DMatrix::from_vec(d, d, a)))
}

/// Sample a Haar-distributed pure state.
///
/// A normalized vector of i.i.d. standard complex Gaussians — identical in
/// law to the first column of the positive-diagonal QR factorization of a
/// Ginibre matrix, at O(d) cost.
pub fn haar_pure_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<PureState> {
    check_dim(d)?;
    let mut v = vec![C64::new(0.0, 0.0); d];
    ginibre_fill(rng, &mut v);
    let norm_sq: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    if norm_sq < 1e-280 {
        return Err(Error::NumericIntegrity {
            context: "Gaussian state vector collapsed to zero".into(),
            value: norm_sq,
        });
    }
    let inv = 1.0 / norm_sq.sqrt();
    for z in v.iter_mut() {
        *z *= inv;
    }
    Ok(PureState::new_unchecked(DVector::from_vec(v)))
}

/// A random rank-`r` density matrix: the first `r` columns of one Haar
/// unitary, mixed with uniform-simplex (Dirichlet(1,...,1)) weights.
///
/// The columns are exactly orthonormal, so the mixing weights are the
/// nonzero spectrum and the rank is exactly `r`.
pub fn random_rank_r_state<R: Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> Result<DensityMatrix> {
    check_dim(d)?;
    if r == 0 || r > d {
        return Err(Error::InvalidArgument(format!(
            "rank {r} must lie in 1..={d}"
        )));
    }
    let u = haar_unitary(d, rng)?;
    let mut weights = Vec::with_capacity(r);
    for _ in 0..r {
        let e: f64 = rng.sample(rand_distr::Exp1);
        weights.push(e.max(1e-290));
    }
    let total: f64 = weights.iter().sum();
    let mut mat = DMatrix::<C64>::zeros(d, d);
    for (k, w) in weights.iter().enumerate() {
        let col = u.matrix().column(k);
        let lam = w / total;
        for j in 0..d {
            for i in 0..d {
                mat[(i, j)] += C64::new(lam, 0.0) * col[i] * col[j].conj();
            }
        }
    }
    DensityMatrix::new(mat)
}

/// A random Hermitian observable `(G + G^H)/2` from a complex Ginibre `G`,
/// optionally rescaled to unit Hilbert–Schmidt norm.
pub fn random_hermitian_observable<R: Rng + ?Sized>(
    d: usize,
    unit_hs_norm: bool,
    rng: &mut R,
) -> Result<Observable> {
    check_dim(d)?;
    let mut g = vec![C64::new(0.0, 0.0); d * d];
    ginibre_fill(rng, &mut g);
    let mut mat = DMatrix::<C64>::zeros(d, d);
    for j in 0..d {
        for i in 0..d {
            mat[(i, j)] = (g[i + j * d] + g[j + i * d].conj()) * 0.5;
        }
    }
    if unit_hs_norm {
        let hs: f64 = mat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if hs > 0.0 {
            mat.scale_mut(1.0 / hs);
        }
    }
    Observable::new(mat)
}

// ---------------------------------------------------------------------------
// Measurement and metrics
// ---------------------------------------------------------------------------

/// Measure `U rho U^H` in the computational basis and return the outcome
/// index, via Born's rule.
///
/// Validates that the outcome probabilities sum to one within `1e-8`.
pub fn measure_computational_basis<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    u: &UnitaryMatrix,
    rng: &mut R,
) -> Result<usize> {
    if rho.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            got: rho.dim(),
        });
    }
    let d = rho.dim();
    let t = u.matrix() * rho.matrix();
    let mut probs = Vec::with_capacity(d);
    for b in 0..d {
        let mut p = 0.0;
        for k in 0..d {
            p += (t[(b, k)] * u.matrix()[(b, k)].conj()).re;
        }
        if p < -1e-10 {
            return Err(Error::NumericIntegrity {
                context: format!("negative Born probability at outcome {b}"),
                value: p,
            });
        }
        probs.push(p.max(0.0));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::NumericIntegrity {
            context: "Born probabilities do not sum to 1".into(),
            value: total,
        });
    }
    Ok(sample_index(&probs, total, rng))
}

/// Inverse-CDF draw from unnormalized weights summing to `total`.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Trace distance `(1/2) * sum |eig(rho - sigma)|`.
///
/// Arguments are canonically ordered before the difference is formed, so the
/// function is exactly symmetric in floating point.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let (first, second) = if matrix_le(a.matrix(), b.matrix()) {
        (a, b)
    } else {
        (b, a)
    };
    let delta = first.matrix() - second.matrix();
    let (evals, _) = hermitian_eigen(&delta);
    Ok(0.5 * evals.iter().map(|l| l.abs()).sum::<f64>())
}

/// Lexicographic comparison of column-major complex data (total float order).
fn matrix_le(a: &DMatrix<C64>, b: &DMatrix<C64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    true
}

/// Fidelity `<psi| rho |psi>` with a pure target, clamped to `[0, 1]`.
pub fn fidelity(rho: &DensityMatrix, psi: &PureState) -> Result<f64> {
    if rho.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: psi.dim(),
            got: rho.dim(),
        });
    }
    let raw = hermitian_quad_form(rho.matrix().as_slice(), rho.dim(), psi.amplitudes().as_slice());
    Ok(raw.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robust_stats::chi_square_gof;
    use crate::seeding::stream;

    fn identity_unitary(d: usize) -> UnitaryMatrix {
        UnitaryMatrix::new(DMatrix::identity(d, d)).unwrap()
    }

    #[test]
    fn pure_state_validation_rejects_bad_norm() {
        let v = DVector::from_vec(vec![C64::new(0.5, 0.0), C64::new(0.5, 0.0)]);
        assert!(matches!(
            PureState::new(v),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn dimension_bounds_enforced() {
        let mut rng = stream(1, &[0]);
        assert!(haar_unitary(0, &mut rng).is_err());
        assert!(haar_unitary(65, &mut rng).is_err());
        assert!(haar_pure_state(2, &mut rng).is_ok());
    }

    #[test]
    fn scalar_dimension_degenerates_gracefully() {
        let mut rng = stream(1, &[1]);
        // a 1x1 unitary is a unit-modulus phase
        let u = haar_unitary(1, &mut rng).unwrap();
        assert!((u.matrix()[(0, 0)].norm() - 1.0).abs() < 1e-12);
        let psi = haar_pure_state(1, &mut rng).unwrap();
        let rho = DensityMatrix::from_pure(&psi).unwrap();
        assert_eq!(measure_computational_basis(&rho, &u, &mut rng).unwrap(), 0);
        assert!((fidelity(&rho, &psi).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn haar_unitary_is_unitary_at_tolerance() {
        let mut rng = stream(2, &[0]);
        for &d in &[2usize, 8, 64] {
            let n = if d == 64 { 20 } else { 100 };
            for _ in 0..n {
                let u = haar_unitary(d, &mut rng).unwrap();
                // re-validate through the checked constructor
                let revalidated = UnitaryMatrix::new(u.matrix().clone());
                assert!(revalidated.is_ok(), "d={d} failed unitarity");
            }
        }
    }

    #[test]
    fn haar_state_first_entry_follows_expected_law() {
        // |v_0|^2 of a Haar state in dimension d follows Beta(1, d-1):
        // P(|v_0|^2 <= x) = 1 - (1-x)^(d-1). Chi-square over 20
        // equal-probability bins.
        let d = 4;
        let n = 100_000;
        let bins = 20;
        let mut rng = stream(3, &[0]);
        let mut counts = vec![0u64; bins];
        for _ in 0..n {
            let psi = haar_pure_state(d, &mut rng).unwrap();
            let x = psi.amplitudes()[0].norm_sqr();
            let q = 1.0 - (1.0 - x).powi((d - 1) as i32); // CDF value, uniform on [0,1]
            let b = ((q * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let probs = vec![1.0 / bins as f64; bins];
        let outcome = chi_square_gof(&counts, &probs).unwrap();
        assert!(
            outcome.p_value > 0.001,
            "chi-square p = {} (stat {})",
            outcome.p_value,
            outcome.statistic
        );
    }

    #[test]
    fn haar_unitary_first_column_matches_state_law() {
        let d = 4;
        let n = 30_000;
        let bins = 10;
        let mut rng = stream(4, &[0]);
        let mut counts = vec![0u64; bins];
        for _ in 0..n {
            let u = haar_unitary(d, &mut rng).unwrap();
            let x = u.matrix()[(0, 0)].norm_sqr();
            let q = 1.0 - (1.0 - x).powi((d - 1) as i32);
            let b = ((q * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let probs = vec![1.0 / bins as f64; bins];
        let outcome = chi_square_gof(&counts, &probs).unwrap();
        assert!(outcome.p_value > 0.001, "p = {}", outcome.p_value);
    }

    #[test]
    fn measurement_on_maximally_mixed_is_uniform() {
        let d = 4;
        let rho = DensityMatrix::new(DMatrix::identity(d, d).scale(1.0 / d as f64)).unwrap();
        let mut rng = stream(5, &[0]);
        let u = haar_unitary(d, &mut rng).unwrap();
        let n = 40_000;
        let mut counts = vec![0u64; d];
        for _ in 0..n {
            counts[measure_computational_basis(&rho, &u, &mut rng).unwrap()] += 1;
        }
        let probs = vec![1.0 / d as f64; d];
        let outcome = chi_square_gof(&counts, &probs).unwrap();
        assert!(outcome.p_value > 0.001, "p = {}", outcome.p_value);
    }

    #[test]
    fn measurement_on_basis_state_is_deterministic() {
        let d = 4;
        let mut v = DVector::from_element(d, C64::new(0.0, 0.0));
        v[2] = C64::new(1.0, 0.0);
        let rho = DensityMatrix::from_pure(&PureState::new(v).unwrap()).unwrap();
        let u = identity_unitary(d);
        let mut rng = stream(6, &[0]);
        for _ in 0..50 {
            assert_eq!(measure_computational_basis(&rho, &u, &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn trace_distance_known_values() {
        let e0 = PureState::new(DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]))
            .unwrap();
        let e1 = PureState::new(DVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]))
            .unwrap();
        let r0 = DensityMatrix::from_pure(&e0).unwrap();
        let r1 = DensityMatrix::from_pure(&e1).unwrap();
        let mixed = DensityMatrix::new(DMatrix::identity(2, 2).scale(0.5)).unwrap();
        assert!((trace_distance(&r0, &r1).unwrap() - 1.0).abs() < 1e-12);
        assert!(trace_distance(&r0, &r0).unwrap().abs() < 1e-12);
        assert!((trace_distance(&r0, &mixed).unwrap() - 0.5).abs() < 1e-12);

        // diagonal pair: (1/2)(|0.75-0.25| + |0.25-0.75|) = 0.5
        let da = DensityMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            C64::new(0.75, 0.0),
            C64::new(0.25, 0.0),
        ])))
        .unwrap();
        let db = DensityMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            C64::new(0.25, 0.0),
            C64::new(0.75, 0.0),
        ])))
        .unwrap();
        assert!((trace_distance(&da, &db).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn trace_distance_is_exactly_symmetric_and_triangular() {
        let mut rng = stream(7, &[0]);
        for _ in 0..50 {
            let a = random_rank_r_state(4, 2, &mut rng).unwrap();
            let b = random_rank_r_state(4, 3, &mut rng).unwrap();
            let c = random_rank_r_state(4, 1, &mut rng).unwrap();
            let ab = trace_distance(&a, &b).unwrap();
            let ba = trace_distance(&b, &a).unwrap();
            assert_eq!(ab.to_bits(), ba.to_bits(), "symmetry must be exact");
            let ac = trace_distance(&a, &c).unwrap();
            let bc = trace_distance(&b, &c).unwrap();
            assert!(ac <= ab + bc + 1e-9, "triangle inequality violated");
            assert!((0.0..=1.0 + 1e-9).contains(&ab));
        }
    }

    #[test]
    fn fidelity_known_values() {
        let mut rng = stream(8, &[0]);
        let psi = haar_pure_state(8, &mut rng).unwrap();
        let rho = DensityMatrix::from_pure(&psi).unwrap();
        assert!((fidelity(&rho, &psi).unwrap() - 1.0).abs() < 1e-10);

        let maximally_mixed =
            DensityMatrix::new(DMatrix::identity(8, 8).scale(1.0 / 8.0)).unwrap();
        assert!((fidelity(&maximally_mixed, &psi).unwrap() - 1.0 / 8.0).abs() < 1e-10);

        // orthogonal cross term: |+> against |0><0| gives 1/2
        let plus = PureState::new(DVector::from_vec(vec![
            C64::new(FRAC_1_SQRT_2, 0.0),
            C64::new(FRAC_1_SQRT_2, 0.0),
        ]))
        .unwrap();
        let zero = PureState::new(DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ]))
        .unwrap();
        let rho0 = DensityMatrix::from_pure(&zero).unwrap();
        assert!((fidelity(&rho0, &plus).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn measurement_frequency_matches_diagonal_state() {
        let rho = DensityMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            C64::new(0.9, 0.0),
            C64::new(0.1, 0.0),
        ])))
        .unwrap();
        let u = identity_unitary(2);
        let mut rng = stream(12, &[0]);
        let n = 10_000;
        let zeros = (0..n)
            .filter(|_| measure_computational_basis(&rho, &u, &mut rng).unwrap() == 0)
            .count();
        let freq = zeros as f64 / n as f64;
        let se = (0.9f64 * 0.1 / n as f64).sqrt();
        assert!((freq - 0.9).abs() <= 5.0 * se, "freq = {freq}");
    }

    #[test]
    fn rank_r_state_has_expected_rank_and_spectrum() {
        let mut rng = stream(9, &[0]);
        let rho = random_rank_r_state(8, 3, &mut rng).unwrap();
        assert_eq!(rho.dim(), 8);
        assert_eq!(rho.rank(), 3);
        let trace: f64 = rho.eigenvalues().iter().sum();
        assert!((trace - 1.0).abs() < 1e-9);
        assert!(rho.eigenvalues().iter().all(|&l| l > -PSD_TOL));
    }

    #[test]
    fn observable_caches_match_matrix() {
        let mut rng = stream(10, &[0]);
        let obs = random_hermitian_observable(6, false, &mut rng).unwrap();
        let tr: f64 = (0..6).map(|i| obs.matrix()[(i, i)].re).sum();
        let hs: f64 = obs.matrix().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((obs.trace() - tr).abs() <= 1e-8 * tr.abs().max(1.0));
        assert!((obs.hs_norm() - hs).abs() <= 1e-8 * hs.max(1.0));

        let unit = random_hermitian_observable(6, true, &mut rng).unwrap();
        assert!((unit.hs_norm() - 1.0).abs() < 1e-9);

        // eigendecomposition reconstructs the matrix
        let (evals, evecs) = obs.eigen().clone();
        let mut rec = DMatrix::<C64>::zeros(6, 6);
        #[allow(clippy::needless_range_loop)]
        for k in 0..6 {
            let v = evecs.column(k);
            for j in 0..6 {
                for i in 0..6 {
                    rec[(i, j)] += C64::new(evals[k], 0.0) * v[i] * v[j].conj();
                }
            }
        }
        let err = (&rec - obs.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-9, "eigen reconstruction error {err}");
    }

    #[test]
    fn observable_expectation_agrees_with_pure_form() {
        let mut rng = stream(11, &[0]);
        let psi = haar_pure_state(5, &mut rng).unwrap();
        let rho = DensityMatrix::from_pure(&psi).unwrap();
        let obs = random_hermitian_observable(5, false, &mut rng).unwrap();
        let a = obs.expectation(&rho).unwrap();
        let b = obs.expectation_pure(&psi).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn density_validation_rejects_bad_inputs() {
        // non-Hermitian
        let mut m = DMatrix::<C64>::identity(2, 2).scale(0.5);
        m[(0, 1)] = C64::new(0.3, 0.0);
        assert!(matches!(
            DensityMatrix::new(m),
            Err(Error::NotHermitian { .. })
        ));
        // wrong trace
        let m = DMatrix::<C64>::identity(2, 2);
        assert!(matches!(
            DensityMatrix::new(m),
            Err(Error::InvalidTrace { .. })
        ));
        // negative eigenvalue, trace 1, Hermitian
        let mut m = DMatrix::<C64>::zeros(2, 2);
        m[(0, 0)] = C64::new(1.5, 0.0);
        m[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(matches!(
            DensityMatrix::new(m),
            Err(Error::NotPositive { .. })
        ));
    }

    #[test]
    fn unitary_validation_rejects_nonunitary() {
        let m = DMatrix::<C64>::identity(3, 3).scale(1.1);
        assert!(matches!(
            UnitaryMatrix::new(m),
            Err(Error::NotUnitary { .. })
        ));
    }
}
