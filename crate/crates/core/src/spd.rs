//! SPD matrix algebra: matrix functions, the affine-invariant distance, the
//! three means, congruence transforms and eigenvalue regularization.
//!
//! Every matrix function goes through a symmetric eigendecomposition and its
//! output is re-symmetrized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{
    all_finite, frobenius, generalized_sym_eigen, max_abs_asymmetry, reconstruct, sym_eigen,
    symmetrize,
};
use crate::{Error, Real, Result};

/// Relative eigenvalue floor applied to sample covariances.
pub const DEFAULT_EIGEN_FLOOR: f64 = 1e-10;

/// Condition-number ceiling for congruence transforms.
pub const MAX_TRANSFORM_CONDITION: f64 = 1e12;

/// A symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix<T: Real> {
    inner: DMatrix<T>,
}

impl<T: Real> SpdMatrix<T> {
    /// Validates symmetry, finiteness and positive definiteness.
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::dim(format!("SPD matrix must be square and non-empty, got {:?}", m.shape())));
        }
        if !all_finite(&m) {
            return Err(Error::DegenerateMatrix("non-finite entries".into()));
        }
        let asym = max_abs_asymmetry(&m);
        if asym > T::SYMMETRY_TOL {
            return Err(Error::DegenerateMatrix(format!("asymmetry {asym:e}")));
        }
        let m = symmetrize(&m);
        let (values, _) = sym_eigen(&m)?;
        if values[0] <= T::zero() {
            return Err(Error::DegenerateMatrix(format!(
                "not positive definite (smallest eigenvalue {:e})",
                values[0].as_f64()
            )));
        }
        Ok(Self { inner: m })
    }

    /// Wraps a matrix known to be SPD by construction, re-symmetrizing it.
    pub(crate) fn trusted(m: DMatrix<T>) -> Self {
        Self { inner: symmetrize(&m) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { inner: DMatrix::identity(dim, dim) }
    }

    pub fn from_diagonal(diag: &[T]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.inner
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<DVector<T>> {
        Ok(sym_eigen(&self.inner)?.0)
    }
}

impl<T: Real> AsRef<DMatrix<T>> for SpdMatrix<T> {
    fn as_ref(&self) -> &DMatrix<T> {
        &self.inner
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanKind {
    Riemannian,
    Euclidean,
    LogEuclidean,
}

impl std::str::FromStr for MeanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "riemannian" => Ok(MeanKind::Riemannian),
            "euclidean" => Ok(MeanKind::Euclidean),
            "logeuclidean" | "log-euclidean" => Ok(MeanKind::LogEuclidean),
            other => Err(Error::Config(format!("unknown mean kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSolverConfig<T: Real> {
    pub max_iterations: usize,
    /// Frobenius norm of the tangent-space update at which the Karcher
    /// iteration stops.
    pub convergence_tol: T,
    pub eigen_floor: T,
}

impl<T: Real> Default for MeanSolverConfig<T> {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_tol: T::lit(1e-6),
            eigen_floor: T::lit(DEFAULT_EIGEN_FLOOR),
        }
    }
}

impl<T: Real> MeanSolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.convergence_tol <= T::zero() || self.eigen_floor <= T::zero() {
            return Err(Error::Config("mean solver parameters must be strictly positive".into()));
        }
        Ok(())
    }
}

/// Principal matrix logarithm of an SPD matrix.
pub fn matrix_log<T: Real>(p: &SpdMatrix<T>) -> Result<DMatrix<T>> {
    let (values, vectors) = sym_eigen(p.as_matrix())?;
    if values.iter().any(|v| !v.finite() || *v <= T::zero()) {
        return Err(Error::DegenerateMatrix("eigenvalue outside (0, inf) in log".into()));
    }
    let logs = values.map(|v| v.ln());
    Ok(reconstruct(&logs, &vectors))
}

/// Matrix exponential of a symmetric matrix; the result is SPD.
pub fn matrix_exp<T: Real>(s: &DMatrix<T>) -> Result<SpdMatrix<T>> {
    let (values, vectors) = sym_eigen(s)?;
    let exps = values.map(|v| v.exp());
    if exps.iter().any(|v| !v.finite() || *v <= T::zero()) {
        return Err(Error::DegenerateMatrix("exponential overflowed".into()));
    }
    Ok(SpdMatrix::trusted(reconstruct(&exps, &vectors)))
}

pub fn matrix_sqrt<T: Real>(p: &SpdMatrix<T>) -> Result<SpdMatrix<T>> {
    let (values, vectors) = sym_eigen(p.as_matrix())?;
    let roots = values.map(|v| v.max(T::zero()).sqrt());
    Ok(SpdMatrix::trusted(reconstruct(&roots, &vectors)))
}

/// `P^{-1/2}` with the default relative eigenvalue floor.
pub fn matrix_inv_sqrt<T: Real>(p: &SpdMatrix<T>) -> Result<SpdMatrix<T>> {
    matrix_inv_sqrt_with_floor(p, T::lit(DEFAULT_EIGEN_FLOOR))
}

/// `P^{-1/2}`, failing with `IllConditioned` when the smallest eigenvalue is
/// below `floor · λ_max` (less the eigensolver's own rounding slack).
pub fn matrix_inv_sqrt_with_floor<T: Real>(p: &SpdMatrix<T>, floor: T) -> Result<SpdMatrix<T>> {
    let (values, vectors) = sym_eigen(p.as_matrix())?;
    let n = values.len();
    let (lo, hi) = (values[0], values[n - 1]);
    let slack = T::lit(64.0) * T::default_epsilon() * hi;
    if lo <= T::zero() || lo < floor * hi - slack {
        return Err(Error::IllConditioned {
            min_eigenvalue: lo.as_f64(),
            floor: (floor * hi).as_f64(),
        });
    }
    let inv_roots = values.map(|v| T::one() / v.sqrt());
    Ok(SpdMatrix::trusted(reconstruct(&inv_roots, &vectors)))
}

fn check_dims<T: Real>(a: &SpdMatrix<T>, b: &SpdMatrix<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::dim(format!("{}x{} vs {}x{}", a.dim(), a.dim(), b.dim(), b.dim())));
    }
    Ok(())
}

/// Affine-invariant distance `‖log(P1⁻¹P2)‖_F`, evaluated as the 2-norm of
/// the log generalized eigenvalues of the pencil `(P2, P1)`.
pub fn riemannian_distance<T: Real>(p1: &SpdMatrix<T>, p2: &SpdMatrix<T>) -> Result<T> {
    check_dims(p1, p2)?;
    let (values, _) = generalized_sym_eigen(p2.as_matrix(), p1.as_matrix())?;
    let mut acc = T::zero();
    for v in values.iter() {
        if *v <= T::zero() {
            return Err(Error::DegenerateMatrix("non-positive generalized eigenvalue".into()));
        }
        let l = v.ln();
        acc += l * l;
    }
    Ok(acc.sqrt())
}

/// Mean of a set of SPD matrices. Log-Euclidean weights are uniform.
pub fn mean<T: Real>(matrices: &[SpdMatrix<T>], kind: MeanKind, cfg: &MeanSolverConfig<T>) -> Result<SpdMatrix<T>> {
    let first = matrices.first().ok_or(Error::EmptyInput)?;
    for m in &matrices[1..] {
        check_dims(first, m)?;
    }
    match kind {
        MeanKind::Euclidean => Ok(euclidean_mean(matrices)),
        MeanKind::LogEuclidean => log_euclidean_mean(matrices),
        MeanKind::Riemannian => riemannian_mean(matrices, cfg),
    }
}

fn euclidean_mean<T: Real>(matrices: &[SpdMatrix<T>]) -> SpdMatrix<T> {
    let n = matrices[0].dim();
    let mut acc = DMatrix::zeros(n, n);
    for m in matrices {
        acc += m.as_matrix();
    }
    SpdMatrix::trusted(acc / T::from_usize_lossy(matrices.len()))
}

fn log_euclidean_mean<T: Real>(matrices: &[SpdMatrix<T>]) -> Result<SpdMatrix<T>> {
    let n = matrices[0].dim();
    let mut acc = DMatrix::zeros(n, n);
    for m in matrices {
        acc += matrix_log(m)?;
    }
    matrix_exp(&(acc / T::from_usize_lossy(matrices.len())))
}

/// Karcher fixed-point iteration with unit step, started at the arithmetic
/// mean.
fn riemannian_mean<T: Real>(matrices: &[SpdMatrix<T>], cfg: &MeanSolverConfig<T>) -> Result<SpdMatrix<T>> {
    cfg.validate()?;
    let mut current = euclidean_mean(matrices);
    if matrices.len() == 1 {
        return Ok(current);
    }
    let inv_n = T::one() / T::from_usize_lossy(matrices.len());
    let mut update_norm = T::zero();
    for _ in 0..cfg.max_iterations {
        let root = matrix_sqrt(&current)?;
        let inv_root = matrix_inv_sqrt_with_floor(&current, cfg.eigen_floor)?;
        let tangent = karcher_gradient(matrices, &inv_root)? * inv_n;
        update_norm = frobenius(&tangent);
        let step = matrix_exp(&tangent)?;
        current = SpdMatrix::trusted(root.as_matrix() * step.as_matrix() * root.as_matrix());
        if update_norm < cfg.convergence_tol {
            return Ok(current);
        }
    }
    Err(Error::Convergence {
        iterations: cfg.max_iterations,
        update_norm: update_norm.as_f64(),
        last_iterate: Box::new(current.as_matrix().map(|x| x.as_f64())),
    })
}

/// `Σ log(M^{-1/2} P_i M^{-1/2})` for a given `M^{-1/2}`.
pub fn karcher_gradient<T: Real>(matrices: &[SpdMatrix<T>], inv_root: &SpdMatrix<T>) -> Result<DMatrix<T>> {
    let n = inv_root.dim();
    let mut acc = DMatrix::zeros(n, n);
    for p in matrices {
        let whitened = SpdMatrix::trusted(inv_root.as_matrix() * p.as_matrix() * inv_root.as_matrix());
        acc += matrix_log(&whitened)?;
    }
    Ok(acc)
}

/// Congruence transform `GᵀPG`.
///
/// `G` must be square with a condition estimate below
/// [`MAX_TRANSFORM_CONDITION`].
pub fn congruence<T: Real>(p: &SpdMatrix<T>, g: &DMatrix<T>) -> Result<SpdMatrix<T>> {
    check_transform(g, p.dim())?;
    Ok(SpdMatrix::trusted(g.transpose() * p.as_matrix() * g))
}

/// [`congruence`] applied to every matrix, checking `G` once.
pub fn congruence_all<T: Real>(ps: &[SpdMatrix<T>], g: &DMatrix<T>) -> Result<Vec<SpdMatrix<T>>> {
    let Some(first) = ps.first() else { return Ok(Vec::new()) };
    check_transform(g, first.dim())?;
    let gt = g.transpose();
    ps.iter()
        .map(|p| {
            check_dims(first, p)?;
            Ok(SpdMatrix::trusted(&gt * p.as_matrix() * g))
        })
        .collect()
}

fn check_transform<T: Real>(g: &DMatrix<T>, dim: usize) -> Result<()> {
    if !g.is_square() || g.nrows() != dim {
        return Err(Error::dim(format!("transform {:?} for {dim}x{dim} matrix", g.shape())));
    }
    let sv = g.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > T::zero() { (smax / smin).as_f64() } else { f64::INFINITY };
    if !(condition < MAX_TRANSFORM_CONDITION) {
        return Err(Error::SingularTransform { condition });
    }
    Ok(())
}

/// Clamps eigenvalues from below at `eigen_floor · λ_max`.
///
/// Inputs that already satisfy the floor are returned unchanged apart from
/// re-symmetrization.
pub fn regularize<T: Real>(m: &DMatrix<T>, eigen_floor: T) -> Result<SpdMatrix<T>> {
    let sym = symmetrize(m);
    let (values, vectors) = sym_eigen(&sym)?;
    let hi = values[values.len() - 1];
    if hi <= T::zero() {
        return Err(Error::DegenerateMatrix("no positive eigenvalue to regularize against".into()));
    }
    let floor = eigen_floor * hi;
    if values[0] >= floor {
        return Ok(SpdMatrix { inner: sym });
    }
    let clamped = values.map(|v| v.max(floor));
    Ok(SpdMatrix::trusted(reconstruct(&clamped, &vectors)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::generalized_sym_eigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::E;

    pub(crate) fn random_spd(rng: &mut impl Rng, n: usize) -> SpdMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        SpdMatrix::new(&a * a.transpose() + DMatrix::identity(n, n) * 0.1).unwrap()
    }

    fn diag(v: &[f64]) -> SpdMatrix<f64> {
        SpdMatrix::from_diagonal(v).unwrap()
    }

    #[test]
    fn log_of_identity_is_zero() {
        let l = matrix_log(&SpdMatrix::<f64>::identity(3)).unwrap();
        assert_eq!(l, DMatrix::zeros(3, 3));
    }

    #[test]
    fn log_of_diagonal() {
        let l = matrix_log(&diag(&[E, 1.0])).unwrap();
        assert!((l[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(l[(1, 1)].abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
    }

    #[test]
    fn log_exp_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_spd(&mut rng, 4);
        let back = matrix_exp(&matrix_log(&p).unwrap()).unwrap();
        assert!((back.as_matrix() - p.as_matrix()).norm() < 1e-9);
    }

    #[test]
    fn inv_sqrt_cases() {
        let i = matrix_inv_sqrt(&SpdMatrix::<f64>::identity(3)).unwrap();
        assert!((i.as_matrix() - DMatrix::identity(3, 3)).norm() < 1e-15);
        let d = matrix_inv_sqrt(&diag(&[4.0, 9.0])).unwrap();
        assert!((d.as_matrix()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((d.as_matrix()[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_spd(&mut rng, 5);
        let w = matrix_inv_sqrt(&p).unwrap();
        let sandwich = w.as_matrix() * p.as_matrix() * w.as_matrix();
        assert!((sandwich - DMatrix::identity(5, 5)).norm() < 1e-9);
    }

    #[test]
    fn inv_sqrt_rejects_tiny_eigenvalue() {
        let p = diag(&[1.0, 1e-13]);
        assert!(matches!(matrix_inv_sqrt(&p), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn distance_cases() {
        let i = SpdMatrix::<f64>::identity(2);
        assert_eq!(riemannian_distance(&i, &i).unwrap(), 0.0);
        assert!((riemannian_distance(&i, &diag(&[E, 1.0])).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            riemannian_distance(&i, &SpdMatrix::identity(3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn distance_matches_whitened_log_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2, 4, 7] {
            let a = random_spd(&mut rng, n);
            let b = random_spd(&mut rng, n);
            let w = matrix_inv_sqrt(&a).unwrap();
            let inner = SpdMatrix::trusted(w.as_matrix() * b.as_matrix() * w.as_matrix());
            let direct = matrix_log(&inner).unwrap().norm();
            let d = riemannian_distance(&a, &b).unwrap();
            assert!((d - direct).abs() < 1e-8, "{d} vs {direct}");
            assert!((d - riemannian_distance(&b, &a).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn mean_idempotent_for_every_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_spd(&mut rng, 3);
        for kind in [MeanKind::Euclidean, MeanKind::LogEuclidean, MeanKind::Riemannian] {
            let m = mean(&[p.clone(), p.clone()], kind, &MeanSolverConfig::default()).unwrap();
            assert!((m.as_matrix() - p.as_matrix()).norm() < 1e-9, "{kind:?}");
        }
    }

    #[test]
    fn log_euclidean_mean_of_commuting_diagonals() {
        let m = mean(&[diag(&[1.0, 1.0]), diag(&[E * E, 1.0])], MeanKind::LogEuclidean, &MeanSolverConfig::default())
            .unwrap();
        assert!((m.as_matrix()[(0, 0)] - E).abs() < 1e-12);
        assert!((m.as_matrix()[(1, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn riemannian_mean_stationarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ps: Vec<_> = (0..10).map(|_| random_spd(&mut rng, 4)).collect();
        let m = mean(&ps, MeanKind::Riemannian, &MeanSolverConfig::default()).unwrap();
        let g = karcher_gradient(&ps, &matrix_inv_sqrt(&m).unwrap()).unwrap();
        assert!(g.norm() < 1e-5, "stationarity residual {}", g.norm());
    }

    #[test]
    fn riemannian_mean_of_codiagonal_set_is_geometric_mean() {
        let ps = [diag(&[1.0, 2.0, 5.0]), diag(&[4.0, 8.0, 0.2]), diag(&[2.0, 0.5, 3.0])];
        let m = mean(&ps, MeanKind::Riemannian, &MeanSolverConfig::default()).unwrap();
        for k in 0..3 {
            let brute: f64 = ps.iter().map(|p| p.as_matrix()[(k, k)]).product::<f64>().powf(1.0 / 3.0);
            assert!((m.as_matrix()[(k, k)] - brute).abs() < 1e-8);
        }
    }

    #[test]
    fn mean_errors() {
        let cfg = MeanSolverConfig::default();
        assert!(matches!(mean::<f64>(&[], MeanKind::Euclidean, &cfg), Err(Error::EmptyInput)));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ps: Vec<_> = (0..6).map(|_| random_spd(&mut rng, 4)).collect();
        let tight = MeanSolverConfig { max_iterations: 1, convergence_tol: 1e-300, eigen_floor: 1e-10 };
        match mean(&ps, MeanKind::Riemannian, &tight) {
            Err(Error::Convergence { iterations, last_iterate, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(last_iterate.shape(), (4, 4));
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn congruence_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_spd(&mut rng, 3);
        let same = congruence(&p, &DMatrix::identity(3, 3)).unwrap();
        assert!((same.as_matrix() - p.as_matrix()).norm() < 1e-15);
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let out = congruence(&SpdMatrix::identity(2), &g).unwrap();
        assert_eq!(out.as_matrix(), &DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0])));
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            congruence(&SpdMatrix::identity(2), &singular),
            Err(Error::SingularTransform { .. })
        ));
    }

    #[test]
    fn regularize_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_spd(&mut rng, 4);
        let r = regularize(p.as_matrix(), 1e-10).unwrap();
        assert!((r.as_matrix() - p.as_matrix()).norm() < 1e-12);

        let r = regularize(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])), 1e-10).unwrap();
        assert!((r.as_matrix()[(0, 0)] - 1.0f64).abs() < 1e-15);
        assert!((r.as_matrix()[(1, 1)] - 1e-10f64).abs() < 1e-20);

        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let rank1 = &x * x.transpose();
        let r = regularize(&rank1, 1e-10).unwrap();
        let lmax = x.norm_squared();
        assert!((r.as_matrix() - &rank1).norm() <= 2.0 * 1e-10 * lmax);
        assert!(r.eigenvalues().unwrap()[0] > 0.0);

        assert!(matches!(regularize(&DMatrix::<f64>::zeros(3, 3), 1e-10), Err(Error::DegenerateMatrix(_))));
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err());
        assert!(SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
        assert!(SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn pencil_vectors_are_b_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_spd(&mut rng, 5);
        let b = random_spd(&mut rng, 5);
        let (vals, w) = generalized_sym_eigen(a.as_matrix(), b.as_matrix()).unwrap();
        let gram = w.transpose() * b.as_matrix() * &w;
        assert!((gram - DMatrix::identity(5, 5)).norm() < 1e-10);
        assert!(vals.as_slice().windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn works_in_single_precision() {
        let p = SpdMatrix::<f32>::from_diagonal(&[4.0, 9.0]).unwrap();
        let w = matrix_inv_sqrt(&p).unwrap();
        assert!((w.as_matrix()[(0, 0)] - 0.5).abs() < 1e-6);
        let d = riemannian_distance(&SpdMatrix::<f32>::identity(2), &p).unwrap();
        let expected = (4f32.ln().powi(2) + 9f32.ln().powi(2)).sqrt();
        assert!((d - expected).abs() < 1e-5);
    }
}
