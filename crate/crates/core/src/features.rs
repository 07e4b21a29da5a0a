//! Tangent-space features, ERP augmented covariances and ANOVA-F selection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::alignment::{AlignedDomain, DomainTrials};
use crate::spd::matrix_log;
use crate::{ClassId, Error, Real, Result};

/// Column-stacked feature vectors (`d × n`) for one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T: Real> {
    data: DMatrix<T>,
    labels: Option<Vec<ClassId>>,
    domain_id: String,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn new(data: DMatrix<T>, labels: Option<Vec<ClassId>>, domain_id: impl Into<String>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != data.ncols() {
                return Err(Error::dim(format!("{} labels for {} feature columns", l.len(), data.ncols())));
            }
        }
        if data.iter().any(|x| !x.finite()) {
            return Err(Error::DegenerateMatrix("non-finite feature".into()));
        }
        Ok(Self { data, labels, domain_id: domain_id.into() })
    }

    pub fn data(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn labels(&self) -> Option<&[ClassId]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[ClassId]> {
        self.labels().ok_or(Error::LabelsRequired)
    }

    pub fn domain_id(&self) -> &str {
        &self.domain_id
    }

    /// Feature dimensionality `d`.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn without_labels(&self) -> Self {
        Self { data: self.data.clone(), labels: None, domain_id: self.domain_id.clone() }
    }

    pub fn with_labels(mut self, labels: Option<Vec<ClassId>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.len() {
                return Err(Error::dim(format!("{} labels for {} columns", l.len(), self.len())));
            }
        }
        self.labels = labels;
        Ok(self)
    }

    /// Column concatenation of several domains. The result is labeled only
    /// if every part is.
    pub fn concat(parts: &[FeatureMatrix<T>], domain_id: impl Into<String>) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyInput)?;
        let d = first.dim();
        if let Some(bad) = parts.iter().find(|p| p.dim() != d) {
            return Err(Error::dim(format!(
                "feature dimension {} of `{}` differs from {d}",
                bad.dim(),
                bad.domain_id
            )));
        }
        let n: usize = parts.iter().map(|p| p.len()).sum();
        let mut data = DMatrix::zeros(d, n);
        let mut col = 0;
        for p in parts {
            data.columns_mut(col, p.len()).copy_from(&p.data);
            col += p.len();
        }
        let labels = if parts.iter().all(|p| p.labels.is_some()) {
            Some(parts.iter().flat_map(|p| p.labels.clone().unwrap()).collect())
        } else {
            None
        };
        Self::new(data, labels, domain_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// `c(c+1)/2` weighted upper-triangle entries of the log matrix.
    TangentUpper,
    /// `c²` entries of the upper-right block of the log of a `2c × 2c`
    /// augmented covariance.
    ErpBlock(usize),
}

/// Upper triangle of a symmetric matrix, row by row, with strict
/// off-diagonal entries scaled by √2 so that the vector 2-norm equals the
/// matrix Frobenius norm.
pub fn upper_weighted<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    let c = m.nrows();
    let sqrt2 = T::lit(std::f64::consts::SQRT_2);
    let mut out = Vec::with_capacity(c * (c + 1) / 2);
    for i in 0..c {
        out.push(m[(i, i)]);
        for j in (i + 1)..c {
            out.push(m[(i, j)] * sqrt2);
        }
    }
    DVector::from_vec(out)
}

/// Maps each aligned covariance to `upper(log P')`.
pub fn tangent_map<T: Real>(aligned: &AlignedDomain<T>) -> Result<FeatureMatrix<T>> {
    let c = aligned.reference.dim();
    let d = c * (c + 1) / 2;
    let mut data = DMatrix::zeros(d, aligned.covariances.len());
    for (j, p) in aligned.covariances.iter().enumerate() {
        data.set_column(j, &upper_weighted(&matrix_log(p)?));
    }
    FeatureMatrix::new(data, aligned.labels.clone(), aligned.subject_id.clone())
}

/// Elementwise mean of the trials of `class` in a labeled domain.
pub fn erp_template<T: Real>(domain: &DomainTrials<T>, class: ClassId) -> Result<DMatrix<T>> {
    let labels = domain.labels().ok_or(Error::LabelsRequired)?;
    let (c, t) = domain.shape().ok_or(Error::EmptyInput)?;
    let mut acc = DMatrix::zeros(c, t);
    let mut count = 0usize;
    for (x, &l) in domain.trials().iter().zip(labels) {
        if l == class {
            acc += x;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InsufficientData(format!(
            "class {class} has no trials in `{}`",
            domain.subject_id()
        )));
    }
    Ok(acc / T::from_usize_lossy(count))
}

/// Elementwise mean of the `class` trials pooled over several labeled
/// domains. This is the template handed to an unlabeled target.
pub fn pooled_erp_template<T: Real>(domains: &[&DomainTrials<T>], class: ClassId) -> Result<DMatrix<T>> {
    let mut acc: Option<DMatrix<T>> = None;
    let mut count = 0usize;
    for d in domains {
        let labels = d.labels().ok_or(Error::LabelsRequired)?;
        for (x, &l) in d.trials().iter().zip(labels) {
            if l == class {
                match &mut acc {
                    Some(a) if a.shape() == x.shape() => *a += x,
                    Some(_) => return Err(Error::dim("trial shapes differ across domains")),
                    None => acc = Some(x.clone()),
                }
                count += 1;
            }
        }
    }
    match acc {
        Some(a) => Ok(a / T::from_usize_lossy(count)),
        None => Err(Error::InsufficientData(format!("class {class} absent from every source"))),
    }
}

/// Stacks the template on top of every trial: `[X̄; X_i]`, shape `2c × t`.
pub fn erp_augment_with_template<T: Real>(domain: &DomainTrials<T>, template: &DMatrix<T>) -> Result<DomainTrials<T>> {
    if let Some(shape) = domain.shape() {
        if shape != template.shape() {
            return Err(Error::dim(format!("template {:?} vs trials {shape:?}", template.shape())));
        }
    }
    let (c, t) = template.shape();
    let trials = domain
        .trials()
        .iter()
        .map(|x| {
            let mut s = DMatrix::zeros(2 * c, t);
            s.rows_mut(0, c).copy_from(template);
            s.rows_mut(c, c).copy_from(x);
            s
        })
        .collect();
    DomainTrials::new(trials, domain.labels().map(<[_]>::to_vec), domain.subject_id())
}

/// Augments a labeled domain with its own `target_class` template.
pub fn erp_augment<T: Real>(domain: &DomainTrials<T>, target_class: ClassId) -> Result<DomainTrials<T>> {
    let template = erp_template(domain, target_class)?;
    erp_augment_with_template(domain, &template)
}

/// Upper-right `c × c` block of `log P'`, flattened row-major.
pub fn erp_block_features<T: Real>(aligned: &AlignedDomain<T>, c: usize) -> Result<FeatureMatrix<T>> {
    let dim = aligned.reference.dim();
    if dim % 2 != 0 || dim != 2 * c {
        return Err(Error::dim(format!("augmented covariance is {dim}x{dim}, expected {}x{}", 2 * c, 2 * c)));
    }
    let mut data = DMatrix::zeros(c * c, aligned.covariances.len());
    for (j, p) in aligned.covariances.iter().enumerate() {
        let log = matrix_log(p)?;
        for r in 0..c {
            for s in 0..c {
                data[(r * c + s, j)] = log[(r, c + s)];
            }
        }
    }
    FeatureMatrix::new(data, aligned.labels.clone(), aligned.subject_id.clone())
}

/// One-way ANOVA F statistic of every feature row.
///
/// Rows with zero between-group variance score 0. Rows with positive
/// between-group and zero within-group variance score `+inf`.
pub fn anova_f_scores<T: Real>(features: &FeatureMatrix<T>) -> Result<Vec<f64>> {
    let labels = features.require_labels()?;
    let classes = class_ids(labels);
    if classes.len() < 2 {
        return Err(Error::InsufficientClasses(classes.len()));
    }
    let counts: Vec<usize> = classes.iter().map(|&k| labels.iter().filter(|&&l| l == k).count()).collect();
    if counts.iter().any(|&n| n < 2) {
        return Err(Error::InsufficientData("every class needs at least 2 samples for ANOVA".into()));
    }
    let n = labels.len() as f64;
    let l = classes.len() as f64;
    let x = features.data();
    let mut scores = Vec::with_capacity(features.dim());
    let mut any_within = false;
    for row in 0..features.dim() {
        let values: Vec<f64> = x.row(row).iter().map(|v| v.as_f64()).collect();
        let grand = values.iter().sum::<f64>() / n;
        let mut between = 0.0;
        let mut within = 0.0;
        for (ci, &k) in classes.iter().enumerate() {
            let group: Vec<f64> = values.iter().zip(labels).filter(|(_, &lab)| lab == k).map(|(v, _)| *v).collect();
            let m = group.iter().sum::<f64>() / counts[ci] as f64;
            between += counts[ci] as f64 * (m - grand).powi(2);
            within += group.iter().map(|v| (v - m).powi(2)).sum::<f64>();
        }
        let scale = grand.abs().max(1.0);
        let between_zero = between <= 1e-24 * scale * scale * n;
        let within_zero = within <= 1e-24 * scale * scale * n;
        if !within_zero {
            any_within = true;
        }
        let f = if between_zero {
            0.0
        } else if within_zero {
            f64::INFINITY
        } else {
            (between / (l - 1.0)) / (within / (n - l))
        };
        scores.push(f);
    }
    if !any_within && !scores.is_empty() {
        return Err(Error::DegenerateStatistics("zero within-group variance on every feature".into()));
    }
    Ok(scores)
}

/// Keeps the `k` features with the highest F statistic.
///
/// Indices come back in descending-F order, ties broken by ascending index;
/// the returned matrix has its rows in that same order. Apply the indices to
/// a companion (target) matrix with [`select_rows`].
pub fn anova_f_select<T: Real>(features: &FeatureMatrix<T>, k: usize) -> Result<(FeatureMatrix<T>, Vec<usize>)> {
    if k == 0 || k > features.dim() {
        return Err(Error::Config(format!("cannot select {k} of {} features", features.dim())));
    }
    let scores = anova_f_scores(features)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    order.truncate(k);
    let selected = select_rows(features, &order)?;
    Ok((selected, order))
}

/// Picks feature rows by index, in the given order.
pub fn select_rows<T: Real>(features: &FeatureMatrix<T>, indices: &[usize]) -> Result<FeatureMatrix<T>> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= features.dim()) {
        return Err(Error::dim(format!("feature index {bad} out of range for d = {}", features.dim())));
    }
    let data = features.data().select_rows(indices);
    FeatureMatrix::new(data, features.labels.clone(), features.domain_id.clone())
}

/// Sorted distinct class ids.
pub fn class_ids(labels: &[ClassId]) -> Vec<ClassId> {
    let mut c = labels.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}
