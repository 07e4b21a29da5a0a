use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{refine, MektConfig, MektResult, SolverMatrices};
use crate::classify::Classifier;
use crate::features::FeatureMatrix;
use crate::linalg::{sym_eigen, symmetrize};
use crate::{ClassId, Error, Real, Result};

const RANGE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    Linear,
    /// `exp(−‖x − y‖² / (2w²))` with width `w`.
    Rbf(f64),
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Rbf(w) if !(w.is_finite() && w > 0.0) => Err(Error::Config(format!("RBF width must be positive, got {w}"))),
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    /// `linear` or `rbf:<width>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "linear" {
            return Ok(Kernel::Linear);
        }
        if let Some(w) = lower.strip_prefix("rbf:") {
            let width: f64 = w.parse().map_err(|_| Error::Config(format!("bad RBF width {w:?}")))?;
            let k = Kernel::Rbf(width);
            k.validate()?;
            return Ok(k);
        }
        Err(Error::Config(format!("unknown kernel {s:?}")))
    }
}

impl std::fmt::Display for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kernel::Linear => write!(f, "linear"),
            Kernel::Rbf(w) => write!(f, "rbf:{w}"),
        }
    }
}

/// Gram matrix `k(x_i, y_j)` between the columns of `x` and `y`.
pub fn kernel_matrix<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>, kernel: Kernel) -> Result<DMatrix<T>> {
    kernel.validate()?;
    if x.nrows() != y.nrows() {
        return Err(Error::dim(format!("kernel inputs with {} and {} features", x.nrows(), y.nrows())));
    }
    Ok(match kernel {
        Kernel::Linear => x.transpose() * y,
        Kernel::Rbf(w) => {
            let two_w2 = T::lit(2.0 * w * w);
            DMatrix::from_fn(x.ncols(), y.ncols(), |i, j| (-(x.column(i) - y.column(j)).norm_squared() / two_w2).exp())
        }
    })
}

/// Kernel fit output. The projections inside `fit` are dual coefficients
/// over the pooled samples `[X_S, X_T]`; the embeddings are `𝐀ᵀK_S` and
/// `𝐁ᵀK_T`.
#[derive(Debug, Clone)]
pub struct KernelMektResult<T: Real> {
    pub fit: MektResult<T>,
    pub source_embedding: DMatrix<T>,
    pub target_embedding: DMatrix<T>,
    /// Numerical rank of the pooled Gram matrix.
    pub rank: usize,
}

pub fn mekt_fit_kernel<T: Real, C: Classifier<T> + ?Sized>(
    source: &FeatureMatrix<T>,
    target: &FeatureMatrix<T>,
    cfg: &MektConfig<T>,
    kernel: Kernel,
    classifier: &C,
) -> Result<KernelMektResult<T>> {
    let y_s = source.require_labels()?;
    let initial = classifier.fit_predict(source.data(), y_s, target.data())?;
    mekt_fit_kernel_with_labels(source, target, cfg, kernel, classifier, &initial)
}

/// The dual problem is solved on the range of the pooled Gram matrix
/// `K = QΛQᵀ` through the coordinates `Λ_r^{1/2} Q_rᵀ`, where it becomes the
/// primal problem on those coordinates with `U` weighted by `K`. Dual
/// coefficients are recovered as `Q_r Λ_r^{-1/2} A'`.
pub fn mekt_fit_kernel_with_labels<T: Real, C: Classifier<T> + ?Sized>(
    source: &FeatureMatrix<T>,
    target: &FeatureMatrix<T>,
    cfg: &MektConfig<T>,
    kernel: Kernel,
    classifier: &C,
    initial_labels: &[ClassId],
) -> Result<KernelMektResult<T>> {
    cfg.validate()?;
    kernel.validate()?;
    let y_s = source.require_labels()?;
    if source.dim() != target.dim() {
        return Err(Error::dim(format!("source dimension {} vs target {}", source.dim(), target.dim())));
    }
    let (n_s, n_t) = (source.len(), target.len());
    let mut pooled = DMatrix::zeros(source.dim(), n_s + n_t);
    pooled.columns_mut(0, n_s).copy_from(source.data());
    pooled.columns_mut(n_s, n_t).copy_from(target.data());
    let gram = symmetrize(&kernel_matrix(&pooled, &pooled, kernel)?);

    let (values, vectors) = sym_eigen(&gram)?;
    let top = values[values.len() - 1];
    if !(top > T::zero()) {
        return Err(Error::DegenerateMatrix("Gram matrix has no positive eigenvalue".into()));
    }
    let keep: Vec<usize> = (0..values.len()).filter(|&j| values[j] > T::lit(RANGE_FLOOR) * top).collect();
    let rank = keep.len();
    if cfg.subspace_dim > rank {
        return Err(Error::dim(format!("subspace dimension {} exceeds Gram rank {rank}", cfg.subspace_dim)));
    }
    let q = vectors.select_columns(&keep);
    let roots = DVector::from_iterator(rank, keep.iter().map(|&j| values[j].sqrt()));
    let coords = DMatrix::from_diagonal(&roots) * q.transpose();
    let f_s = coords.columns(0, n_s).into_owned();
    let f_t = coords.columns(n_s, n_t).into_owned();
    let pooled_mean = coords.column_mean();

    let blocks = SolverMatrices::assemble(&f_s, y_s, &f_t, target.data(), Some(&pooled_mean), cfg)?;
    let mut fit = refine(blocks, &f_s, y_s, &f_t, cfg, classifier, initial_labels)?;

    let source_embedding = fit.projections.a.transpose() * &f_s;
    let target_embedding = fit.projections.b.transpose() * &f_t;
    let back = &q * DMatrix::from_diagonal(&roots.map(|r| T::one() / r));
    fit.projections.a = &back * &fit.projections.a;
    fit.projections.b = &back * &fit.projections.b;
    Ok(KernelMektResult { fit, source_embedding, target_embedding, rank })
}
