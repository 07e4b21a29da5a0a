use nalgebra::{DMatrix, DVector};

use crate::alignment::trial_covariance;
use crate::features::{class_ids, FeatureMatrix};
use crate::linalg::generalized_sym_eigen;
use crate::spd::regularize;
use crate::{ClassId, Error, Real, Result};

const RETRY_FLOOR: f64 = 1e-6;

/// Common spatial patterns: `f` filters per class, stacked `c × 2f`.
#[derive(Debug, Clone, PartialEq)]
pub struct CspFilter<T: Real> {
    pub filters: DMatrix<T>,
    pub per_class: usize,
    pub class_ids: [ClassId; 2],
}

/// Fits CSP on a binary-labeled set of `c × t` trials.
///
/// For class `k` the filters are the `f` leading generalized eigenvectors of
/// `Σ̄_k w = λ Σ̄_{1−k} w`, with `Σ̄` the class-mean covariances.
pub fn csp_fit<T: Real>(trials: &[DMatrix<T>], labels: &[ClassId], f: usize) -> Result<CspFilter<T>> {
    if trials.len() != labels.len() {
        return Err(Error::dim(format!("{} labels for {} trials", labels.len(), trials.len())));
    }
    let classes = class_ids(labels);
    match classes.len() {
        0 | 1 => return Err(Error::InsufficientClasses(classes.len())),
        2 => {}
        n => return Err(Error::Unsupported(format!("CSP handles two classes, got {n}"))),
    }
    let c = trials[0].nrows();
    if f == 0 || 2 * f > c {
        return Err(Error::Config(format!("{f} filters per class need at least {} channels, have {c}", 2 * f)));
    }
    let mut means = [DMatrix::zeros(c, c), DMatrix::zeros(c, c)];
    let mut counts = [0usize; 2];
    for (x, &l) in trials.iter().zip(labels) {
        let k = usize::from(l != classes[0]);
        means[k] += trial_covariance(x)?.as_matrix();
        counts[k] += 1;
    }
    for k in 0..2 {
        means[k] /= T::from_usize_lossy(counts[k]);
    }
    let mut filters = DMatrix::zeros(c, 2 * f);
    for k in 0..2 {
        let (num, den) = (&means[k], &means[1 - k]);
        let (_, vectors) = match generalized_sym_eigen(num, den) {
            Ok(r) => r,
            Err(_) => {
                let num = regularize(num, T::lit(RETRY_FLOOR))?;
                let den = regularize(den, T::lit(RETRY_FLOOR))?;
                generalized_sym_eigen(num.as_matrix(), den.as_matrix())?
            }
        };
        for j in 0..f {
            filters.set_column(k * f + j, &vectors.column(c - 1 - j));
        }
    }
    Ok(CspFilter { filters, per_class: f, class_ids: [classes[0], classes[1]] })
}

/// `log(diag(X'X'ᵀ) / tr(X'X'ᵀ))` with `X' = Wᵀ X`.
pub fn csp_features<T: Real>(filter: &CspFilter<T>, trial: &DMatrix<T>) -> Result<DVector<T>> {
    if trial.nrows() != filter.filters.nrows() {
        return Err(Error::dim(format!("filter expects {} channels, trial has {}", filter.filters.nrows(), trial.nrows())));
    }
    let projected = filter.filters.transpose() * trial;
    let variances = DVector::from_iterator(projected.nrows(), projected.row_iter().map(|r| r.norm_squared()));
    let total = variances.sum();
    if total <= T::zero() {
        return Err(Error::DegenerateMatrix("filtered trial has zero power".into()));
    }
    Ok(variances.map(|v| (v / total).ln()))
}

pub fn csp_feature_matrix<T: Real>(
    filter: &CspFilter<T>,
    trials: &[DMatrix<T>],
    labels: Option<Vec<ClassId>>,
    domain_id: &str,
) -> Result<FeatureMatrix<T>> {
    let mut data = DMatrix::zeros(filter.filters.ncols(), trials.len());
    for (j, x) in trials.iter().enumerate() {
        data.set_column(j, &csp_features(filter, x)?);
    }
    FeatureMatrix::new(data, labels, domain_id)
}
