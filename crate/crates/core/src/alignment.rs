//! Per-domain recentring of trial covariances.
//!
//! Centroid alignment (CA) congruence-transforms every covariance of a
//! domain by `M^{-1/2}`, where `M` is the domain mean under the chosen
//! [`MeanKind`]. Riemannian alignment does the same with a reference mean
//! computed over a caller-chosen subset of trials. Euclidean alignment
//! whitens the raw trials instead of their covariances.

use log::warn;
use nalgebra::DMatrix;

use crate::spd::{self, congruence_all, matrix_inv_sqrt, MeanKind, MeanSolverConfig, SpdMatrix, DEFAULT_EIGEN_FLOOR};
use crate::{ClassId, Error, Real, Result};

/// The epoched trials of one subject, each `channels × samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainTrials<T: Real> {
    trials: Vec<DMatrix<T>>,
    labels: Option<Vec<ClassId>>,
    subject_id: String,
}

impl<T: Real> DomainTrials<T> {
    pub fn new(trials: Vec<DMatrix<T>>, labels: Option<Vec<ClassId>>, subject_id: impl Into<String>) -> Result<Self> {
        if let Some(first) = trials.first() {
            let shape = first.shape();
            if let Some((i, t)) = trials.iter().enumerate().find(|(_, t)| t.shape() != shape) {
                return Err(Error::dim(format!("trial {i} has shape {:?}, expected {shape:?}", t.shape())));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != trials.len() {
                return Err(Error::dim(format!("{} labels for {} trials", labels.len(), trials.len())));
            }
            if labels.iter().any(|&l| l == 0) {
                return Err(Error::Config("class ids start at 1".into()));
            }
        }
        Ok(Self { trials, labels, subject_id: subject_id.into() })
    }

    pub fn trials(&self) -> &[DMatrix<T>] {
        &self.trials
    }

    pub fn labels(&self) -> Option<&[ClassId]> {
        self.labels.as_deref()
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// `(channels, samples)`, or `None` for an empty domain.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.trials.first().map(|t| t.shape())
    }

    /// The same trials with the label field dropped. Fitting code for an
    /// unlabeled target is always handed this view.
    pub fn without_labels(&self) -> Self {
        Self { trials: self.trials.clone(), labels: None, subject_id: self.subject_id.clone() }
    }

    pub fn into_parts(self) -> (Vec<DMatrix<T>>, Option<Vec<ClassId>>, String) {
        (self.trials, self.labels, self.subject_id)
    }
}

/// Output of centroid or Riemannian alignment.
#[derive(Debug, Clone)]
pub struct AlignedDomain<T: Real> {
    pub covariances: Vec<SpdMatrix<T>>,
    /// The `M^{-1/2}` that was applied.
    pub reference: SpdMatrix<T>,
    pub mean_kind: MeanKind,
    pub labels: Option<Vec<ClassId>>,
    pub subject_id: String,
}

/// `regularize(X Xᵀ)`.
pub fn trial_covariance<T: Real>(x: &DMatrix<T>) -> Result<SpdMatrix<T>> {
    let (c, t) = x.shape();
    if t < c {
        warn!("trial has {t} samples for {c} channels; covariance will be rank deficient");
    }
    spd::regularize(&(x * x.transpose()), T::lit(DEFAULT_EIGEN_FLOOR))
}

pub fn domain_covariances<T: Real>(domain: &DomainTrials<T>) -> Result<Vec<SpdMatrix<T>>> {
    domain.trials().iter().map(trial_covariance).collect()
}

/// Centroid alignment of a domain's trial covariances.
pub fn center_align<T: Real>(domain: &DomainTrials<T>, kind: MeanKind, cfg: &MeanSolverConfig<T>) -> Result<AlignedDomain<T>> {
    let covariances = domain_covariances(domain)?;
    center_align_covariances(covariances, domain.labels().map(<[_]>::to_vec), domain.subject_id(), kind, cfg)
}

/// Centroid alignment starting from precomputed covariances.
pub fn center_align_covariances<T: Real>(
    covariances: Vec<SpdMatrix<T>>,
    labels: Option<Vec<ClassId>>,
    subject_id: &str,
    kind: MeanKind,
    cfg: &MeanSolverConfig<T>,
) -> Result<AlignedDomain<T>> {
    if covariances.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "alignment needs at least 2 trials, domain `{subject_id}` has {}",
            covariances.len()
        )));
    }
    let center = spd::mean(&covariances, kind, cfg)?;
    apply_reference(covariances, &center, labels, subject_id, kind, cfg)
}

fn apply_reference<T: Real>(
    covariances: Vec<SpdMatrix<T>>,
    center: &SpdMatrix<T>,
    labels: Option<Vec<ClassId>>,
    subject_id: &str,
    kind: MeanKind,
    cfg: &MeanSolverConfig<T>,
) -> Result<AlignedDomain<T>> {
    let reference = spd::matrix_inv_sqrt_with_floor(center, cfg.eigen_floor)?;
    let aligned = congruence_all(&covariances, reference.as_matrix())?;
    Ok(AlignedDomain { covariances: aligned, reference, mean_kind: kind, labels, subject_id: subject_id.to_string() })
}

/// Riemannian alignment: the reference is the Riemannian mean of the trials
/// at `reference_trials` (typically resting or non-target trials).
pub fn riemannian_align<T: Real>(
    domain: &DomainTrials<T>,
    reference_trials: &[usize],
    cfg: &MeanSolverConfig<T>,
) -> Result<AlignedDomain<T>> {
    if reference_trials.is_empty() {
        return Err(Error::InsufficientData("empty reference trial set".into()));
    }
    if let Some(&bad) = reference_trials.iter().find(|&&i| i >= domain.len()) {
        return Err(Error::dim(format!("reference index {bad} out of range for {} trials", domain.len())));
    }
    let covariances = domain_covariances(domain)?;
    let subset: Vec<_> = reference_trials.iter().map(|&i| covariances[i].clone()).collect();
    let center = spd::mean(&subset, MeanKind::Riemannian, cfg)?;
    apply_reference(
        covariances,
        &center,
        domain.labels().map(<[_]>::to_vec),
        domain.subject_id(),
        MeanKind::Riemannian,
        cfg,
    )
}

/// Euclidean alignment: `X'_i = M_E^{-1/2} X_i` with `M_E` the arithmetic
/// mean of the trial covariances.
pub fn euclidean_align<T: Real>(domain: &DomainTrials<T>) -> Result<DomainTrials<T>> {
    if domain.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "alignment needs at least 2 trials, domain `{}` has {}",
            domain.subject_id(),
            domain.len()
        )));
    }
    let (c, _) = domain.shape().expect("non-empty");
    let mut acc = DMatrix::zeros(c, c);
    for x in domain.trials() {
        acc += x * x.transpose();
    }
    acc /= T::from_usize_lossy(domain.len());
    let center = SpdMatrix::new(acc).map_err(|_| Error::IllConditioned { min_eigenvalue: 0.0, floor: DEFAULT_EIGEN_FLOOR })?;
    let w = matrix_inv_sqrt(&center)?;
    let trials = domain.trials().iter().map(|x| w.as_matrix() * x).collect();
    DomainTrials::new(trials, domain.labels().map(<[_]>::to_vec), domain.subject_id())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::riemannian_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_domain(rng: &mut impl Rng, n: usize, c: usize, t: usize) -> DomainTrials<f64> {
        let mix = DMatrix::from_fn(c, c, |_, _| rng.random_range(-1.0..1.0)) + DMatrix::identity(c, c);
        let trials = (0..n)
            .map(|_| &mix * DMatrix::from_fn(c, t, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let labels = (0..n).map(|i| (i % 2) as u32 + 1).collect();
        DomainTrials::new(trials, Some(labels), "s").unwrap()
    }

    fn mean_of(covs: &[SpdMatrix<f64>]) -> DMatrix<f64> {
        let c = covs[0].dim();
        covs.iter().fold(DMatrix::zeros(c, c), |acc, p| acc + p.as_matrix()) / covs.len() as f64
    }

    #[test]
    fn covariance_of_identity_trial() {
        let p = trial_covariance(&DMatrix::<f64>::identity(2, 2)).unwrap();
        assert_eq!(p.as_matrix(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn covariance_of_single_active_row_is_regularized() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0]);
        let p = trial_covariance(&x).unwrap();
        let ev = p.eigenvalues().unwrap();
        assert!(ev[0] > 0.0);
        assert!((ev[0] - 14.0f64 * 1e-10).abs() < 1e-20);
    }

    #[test]
    fn covariance_matches_columnwise_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = DMatrix::from_fn(4, 100, |_, _| rng.random_range(-1.0..1.0));
        let mut brute = DMatrix::<f64>::zeros(4, 4);
        for j in 0..100 {
            let col = x.column(j);
            brute += &col * col.transpose();
        }
        assert!((trial_covariance(&x).unwrap().as_matrix() - brute).norm() < 1e-10);
    }

    #[test]
    fn identical_trials_align_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(3, 20, |_, _| rng.random_range(-1.0..1.0));
        let d = DomainTrials::new(vec![x.clone(), x.clone(), x], None, "s").unwrap();
        for kind in [MeanKind::Euclidean, MeanKind::LogEuclidean, MeanKind::Riemannian] {
            let a = center_align(&d, kind, &MeanSolverConfig::default()).unwrap();
            for p in &a.covariances {
                assert!((p.as_matrix() - DMatrix::identity(3, 3)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn diagonal_euclidean_alignment_by_hand() {
        let x1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let x2 = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let d = DomainTrials::new(vec![x1, x2], None, "s").unwrap();
        let a = center_align(&d, MeanKind::Euclidean, &MeanSolverConfig::default()).unwrap();
        assert!((a.covariances[0].as_matrix()[(0, 0)] - 0.4f64).abs() < 1e-12);
        assert!((a.covariances[1].as_matrix()[(0, 0)] - 1.6f64).abs() < 1e-12);
        assert!((a.covariances[1].as_matrix()[(1, 1)] - 1.0f64).abs() < 1e-12);
        assert!((mean_of(&a.covariances) - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn riemannian_alignment_recentres() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = random_domain(&mut rng, 20, 4, 50);
        let cfg = MeanSolverConfig::default();
        let a = center_align(&d, MeanKind::Riemannian, &cfg).unwrap();
        let m = spd::mean(&a.covariances, MeanKind::Riemannian, &cfg).unwrap();
        assert!(riemannian_distance(&m, &SpdMatrix::identity(4)).unwrap() <= 1e-5);
        assert_eq!(a.labels.as_deref(), d.labels());
    }

    #[test]
    fn euclidean_kind_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let d = random_domain(&mut rng, 15, 5, 40);
        let cfg = MeanSolverConfig::default();
        let a = center_align(&d, MeanKind::Euclidean, &cfg).unwrap();
        let m = mean_of(&a.covariances);
        assert!((&m - DMatrix::identity(5, 5)).norm() < 1e-8);
        for k in 0..5 {
            assert!((m[(k, k)] - 1.0).abs() < 1e-8);
        }
        let again = center_align_covariances(a.covariances.clone(), None, "s", MeanKind::Euclidean, &cfg).unwrap();
        for (p, q) in a.covariances.iter().zip(&again.covariances) {
            assert!((p.as_matrix() - q.as_matrix()).norm() <= 1e-8);
        }
    }

    #[test]
    fn too_few_trials() {
        let d = DomainTrials::new(vec![DMatrix::<f64>::identity(2, 2)], None, "s").unwrap();
        assert!(matches!(
            center_align(&d, MeanKind::Euclidean, &MeanSolverConfig::default()),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(euclidean_align(&d), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn riemannian_align_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let d = random_domain(&mut rng, 10, 3, 30);
        let cfg = MeanSolverConfig::default();
        let all: Vec<usize> = (0..10).collect();
        let ra = riemannian_align(&d, &all, &cfg).unwrap();
        let ca = center_align(&d, MeanKind::Riemannian, &cfg).unwrap();
        for (p, q) in ra.covariances.iter().zip(&ca.covariances) {
            assert!((p.as_matrix() - q.as_matrix()).norm() < 1e-12);
        }
        let one = riemannian_align(&d, &[3], &cfg).unwrap();
        assert!((one.covariances[3].as_matrix() - DMatrix::identity(3, 3)).norm() < 1e-9);

        let subset = [0usize, 2, 4, 6];
        let ra = riemannian_align(&d, &subset, &cfg).unwrap();
        let covs = domain_covariances(&d).unwrap();
        let picked: Vec<_> = subset.iter().map(|&i| covs[i].clone()).collect();
        let m = spd::mean(&picked, MeanKind::Riemannian, &cfg).unwrap();
        let expected_ref = matrix_inv_sqrt(&m).unwrap();
        assert!((ra.reference.as_matrix() - expected_ref.as_matrix()).norm() < 1e-9);

        assert!(matches!(riemannian_align(&d, &[], &cfg), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn euclidean_align_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let d = random_domain(&mut rng, 12, 4, 60);
        let out = euclidean_align(&d).unwrap();
        let mut acc = DMatrix::<f64>::zeros(4, 4);
        for x in out.trials() {
            acc += x * x.transpose();
        }
        assert!((acc / 12.0 - DMatrix::identity(4, 4)).norm() < 1e-8);
        let twice = euclidean_align(&out).unwrap();
        for (a, b) in out.trials().iter().zip(twice.trials()) {
            assert!((a - b).norm() < 1e-9);
        }

        let x1 = DMatrix::from_row_slice(1, 1, &[1.0]);
        let x2 = DMatrix::from_row_slice(1, 1, &[3f64.sqrt()]);
        let out = euclidean_align(&DomainTrials::new(vec![x1, x2], None, "s").unwrap()).unwrap();
        assert!((out.trials()[0][(0, 0)] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((out.trials()[1][(0, 0)] - (1.5f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn euclidean_align_rejects_singular_mean() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0]);
        let d = DomainTrials::new(vec![x.clone(), x * 2.0], None, "s").unwrap();
        assert!(matches!(euclidean_align(&d), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn domain_validation() {
        let a = DMatrix::<f64>::zeros(2, 3);
        let b = DMatrix::<f64>::zeros(3, 3);
        assert!(DomainTrials::new(vec![a.clone(), b], None, "s").is_err());
        assert!(DomainTrials::new(vec![a.clone()], Some(vec![1, 2]), "s").is_err());
        assert!(DomainTrials::new(vec![a], Some(vec![0]), "s").is_err());
    }
}
