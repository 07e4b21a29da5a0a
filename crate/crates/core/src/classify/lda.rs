use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::features::class_ids;
use crate::linalg::{sym_eigen, symmetrize};
use crate::{ClassId, Error, Real, Result};

const ESCALATED_SHRINKAGE: f64 = 1e-3;
const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shrinkage {
    Fixed(f64),
    /// Analytic Ledoit–Wolf intensity computed from the class-centred data
    /// after scaling every feature to unit within-class variance.
    Auto,
}

impl Default for Shrinkage {
    fn default() -> Self {
        Shrinkage::Auto
    }
}

/// Shrinkage LDA with equal class priors.
#[derive(Debug, Clone)]
pub struct LdaModel<T: Real> {
    pub class_ids: Vec<ClassId>,
    pub class_means: Vec<DVector<T>>,
    pub pooled_covariance: DMatrix<T>,
    pub shrinkage: f64,
    weights: DMatrix<T>,
    offsets: DVector<T>,
}

/// Fits on the columns of `x`.
pub fn lda_fit<T: Real>(x: &DMatrix<T>, labels: &[ClassId], shrinkage: Shrinkage) -> Result<LdaModel<T>> {
    if labels.len() != x.ncols() {
        return Err(Error::dim(format!("{} labels for {} samples", labels.len(), x.ncols())));
    }
    let classes = class_ids(labels);
    if classes.len() < 2 {
        return Err(Error::InsufficientClasses(classes.len()));
    }
    let p = x.nrows();
    let n = x.ncols();
    let mut means = Vec::with_capacity(classes.len());
    for &k in &classes {
        let mut m = DVector::zeros(p);
        let mut count = 0usize;
        for (j, &l) in labels.iter().enumerate() {
            if l == k {
                m += x.column(j);
                count += 1;
            }
        }
        means.push(m / T::from_usize_lossy(count));
    }
    let mut centred = x.clone();
    for (j, &l) in labels.iter().enumerate() {
        let ci = classes.binary_search(&l).expect("class present");
        let mut col = centred.column_mut(j);
        col -= &means[ci];
    }
    let scatter = symmetrize(&(&centred * centred.transpose())) / T::from_usize_lossy(n);

    // Auto works on per-feature standardized data; Fixed uses the raw scatter
    let scale: DVector<T> = match shrinkage {
        Shrinkage::Auto => DVector::from_fn(p, |i, _| {
            let v = scatter[(i, i)];
            if v > T::zero() { v.sqrt() } else { T::one() }
        }),
        Shrinkage::Fixed(_) => DVector::from_element(p, T::one()),
    };
    let inv_scale = scale.map(|s| T::one() / s);
    let unit_scatter = DMatrix::from_diagonal(&inv_scale) * &scatter * DMatrix::from_diagonal(&inv_scale);
    let mu = unit_scatter.trace() / T::from_usize_lossy(p);

    let mut gamma = match shrinkage {
        Shrinkage::Fixed(g) => {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Config(format!("shrinkage {g} outside [0, 1]")));
            }
            g
        }
        Shrinkage::Auto => {
            let unit_centred = DMatrix::from_diagonal(&inv_scale) * &centred;
            ledoit_wolf_intensity(&unit_centred, &unit_scatter, mu)
        }
    };

    let target = if mu > T::zero() { mu } else { T::one() };
    let d = DMatrix::from_diagonal(&scale);
    let shrink = |g: f64| -> DMatrix<T> {
        let g = T::lit(g);
        let inner = &unit_scatter * (T::one() - g) + DMatrix::identity(p, p) * (g * target);
        symmetrize(&(&d * inner * &d))
    };
    let mut cov = shrink(gamma);
    if is_singular(&cov)? {
        if gamma < ESCALATED_SHRINKAGE {
            warn!("pooled covariance singular at shrinkage {gamma}; escalating to {ESCALATED_SHRINKAGE}");
            gamma = ESCALATED_SHRINKAGE;
            cov = shrink(gamma);
        }
        if is_singular(&cov)? {
            cov = DMatrix::identity(p, p);
        }
    }

    let inv = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Solver("pooled covariance not positive definite".into()))?
        .inverse();
    let mut weights = DMatrix::zeros(p, classes.len());
    let mut offsets = DVector::zeros(classes.len());
    for (k, m) in means.iter().enumerate() {
        let w = &inv * m;
        offsets[k] = -T::lit(0.5) * m.dot(&w);
        weights.set_column(k, &w);
    }
    Ok(LdaModel { class_ids: classes, class_means: means, pooled_covariance: cov, shrinkage: gamma, weights, offsets })
}

fn is_singular<T: Real>(m: &DMatrix<T>) -> Result<bool> {
    let (values, _) = sym_eigen(m)?;
    let hi = values[values.len() - 1];
    Ok(hi <= T::zero() || values[0] <= T::lit(SINGULAR_RATIO) * hi)
}

/// `β² / δ²` clamped to `[0, 1]`, with `δ² = ‖S − μI‖²_F` and `β²` the
/// averaged squared deviation of the sample outer products from `S`.
fn ledoit_wolf_intensity<T: Real>(centred: &DMatrix<T>, scatter: &DMatrix<T>, mu: T) -> f64 {
    let p = scatter.nrows();
    let n = centred.ncols();
    let target = DMatrix::identity(p, p) * mu;
    let delta2 = (scatter - target).norm_squared().as_f64();
    if delta2 <= 0.0 || n == 0 {
        return 0.0;
    }
    let mut beta_sum = 0.0;
    for j in 0..n {
        let z = centred.column(j);
        let outer = &z * z.transpose();
        beta_sum += (outer - scatter).norm_squared().as_f64();
    }
    let beta2 = (beta_sum / (n as f64 * n as f64)).min(delta2);
    (beta2 / delta2).clamp(0.0, 1.0)
}

impl<T: Real> LdaModel<T> {
    /// Linear discriminant scores, one row per class.
    pub fn decision_function(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let mut scores = self.weights.transpose() * x;
        for mut col in scores.column_iter_mut() {
            col += &self.offsets;
        }
        scores
    }
}

/// Argmax of the discriminants; exact ties go to the lower class id.
pub fn lda_predict<T: Real>(model: &LdaModel<T>, x: &DMatrix<T>) -> Result<Vec<ClassId>> {
    if x.nrows() != model.weights.nrows() {
        return Err(Error::dim(format!("model expects {} features, got {}", model.weights.nrows(), x.nrows())));
    }
    let scores = model.decision_function(x);
    Ok(scores
        .column_iter()
        .map(|col| {
            let mut best = 0;
            for k in 1..col.len() {
                if col[k] > col[best] {
                    best = k;
                }
            }
            model.class_ids[best]
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LdaClassifier {
    pub shrinkage: Shrinkage,
}

impl<T: Real> Classifier<T> for LdaClassifier {
    fn fit_predict(&self, train: &DMatrix<T>, labels: &[ClassId], test: &DMatrix<T>) -> Result<Vec<ClassId>> {
        let model = lda_fit(train, labels, self.shrinkage)?;
        lda_predict(&model, test)
    }
}
