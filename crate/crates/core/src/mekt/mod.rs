//! Manifold-embedded knowledge transfer: a pair of linear maps `A` (source)
//! and `B` (target) into a shared `p`-dimensional subspace, refined with
//! target pseudo-labels.

mod blocks;
mod kernel;

pub use blocks::{
    graph_laplacian, joint_mmd_blocks, joint_mmd_value, marginal_conditional_mmd_blocks, one_hot, scatter_matrices, u_block,
};
pub use kernel::{kernel_matrix, mekt_fit_kernel, mekt_fit_kernel_with_labels, Kernel, KernelMektResult};

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::classify::Classifier;
use crate::features::{class_ids, FeatureMatrix};
use crate::linalg::{all_finite, generalized_sym_eigen, symmetrize};
use crate::{ClassId, Error, Real, Result};
use blocks::{block_diag, laplacian_from_columns, scatter_from_columns};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MmdKind {
    /// Joint-probability MMD over class-weighted means.
    #[default]
    Joint,
    /// Marginal plus per-class conditional MMD.
    Traditional,
}

impl std::str::FromStr for MmdKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "joint" => Ok(MmdKind::Joint),
            "traditional" | "marginal-conditional" => Ok(MmdKind::Traditional),
            other => Err(Error::Config(format!("unknown MMD kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MektConfig<T: Real> {
    /// Source discriminability weight.
    pub alpha: T,
    /// Target locality weight.
    pub beta: T,
    /// Parameter-transfer weight.
    pub rho: T,
    pub subspace_dim: usize,
    pub iterations: usize,
    pub knn: usize,
    pub sigma: T,
    pub v_ridge: T,
    pub mmd: MmdKind,
}

impl<T: Real> Default for MektConfig<T> {
    fn default() -> Self {
        MektConfig {
            alpha: T::lit(0.01),
            beta: T::lit(0.1),
            rho: T::lit(20.0),
            subspace_dim: 10,
            iterations: 5,
            knn: 5,
            sigma: T::one(),
            v_ridge: T::lit(1e-6),
            mmd: MmdKind::Joint,
        }
    }
}

impl<T: Real> MektConfig<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("rho", self.rho), ("v_ridge", self.v_ridge)] {
            if !v.finite() || v < T::zero() {
                return Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !self.sigma.finite() || self.sigma <= T::zero() {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.subspace_dim == 0 {
            return Err(Error::Config("subspace dimension must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iteration count must be positive".into()));
        }
        if self.knn == 0 {
            return Err(Error::Config("neighbour count must be positive".into()));
        }
        Ok(())
    }
}

/// All blocks of the generalized eigenproblem, `2d × 2d` unless noted.
#[derive(Debug, Clone)]
pub struct SolverMatrices<T: Real> {
    pub p_blk: DMatrix<T>,
    pub l_blk: DMatrix<T>,
    pub u_blk: DMatrix<T>,
    pub v_blk: DMatrix<T>,
    pub r_blk: DMatrix<T>,
    /// `d × d`.
    pub s_w: DMatrix<T>,
    /// `d × d`.
    pub s_b: DMatrix<T>,
    /// `n_T × n_T` graph Laplacian.
    pub laplacian: DMatrix<T>,
    /// `n_T × n_T`.
    pub centering: DMatrix<T>,
}

impl<T: Real> SolverMatrices<T> {
    /// Builds the label-independent blocks and an all-zero `R`.
    pub fn build_static(source: &FeatureMatrix<T>, target: &FeatureMatrix<T>, cfg: &MektConfig<T>) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::dim(format!("source dimension {} vs target {}", source.dim(), target.dim())));
        }
        Self::assemble(source.data(), source.require_labels()?, target.data(), target.data(), None, cfg)
    }

    /// `graph_points` are the target samples the kNN graph is built on;
    /// `sb_mean` overrides the overall mean in `S_b`.
    pub(crate) fn assemble(
        x_s: &DMatrix<T>,
        y_s: &[ClassId],
        x_t: &DMatrix<T>,
        graph_points: &DMatrix<T>,
        sb_mean: Option<&DVector<T>>,
        cfg: &MektConfig<T>,
    ) -> Result<Self> {
        let d = x_s.nrows();
        let (s_w, s_b) = scatter_from_columns(x_s, y_s, sb_mean)?;
        let (laplacian, centering) = laplacian_from_columns(graph_points, cfg.knn, cfg.sigma)?;
        let zero = DMatrix::zeros(d, d);
        let p_blk = block_diag(&s_w, &zero);
        let l_blk = block_diag(&zero, &symmetrize(&(x_t * &laplacian * x_t.transpose())));
        let v_blk = block_diag(&s_b, &symmetrize(&(x_t * &centering * x_t.transpose())));
        Ok(SolverMatrices {
            p_blk,
            l_blk,
            u_blk: u_block(d),
            v_blk,
            r_blk: DMatrix::zeros(2 * d, 2 * d),
            s_w,
            s_b,
            laplacian,
            centering,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.s_w.nrows()
    }

    /// `αP + βL + ρU + R`.
    pub fn lhs(&self, cfg: &MektConfig<T>) -> DMatrix<T> {
        &self.p_blk * cfg.alpha + &self.l_blk * cfg.beta + &self.u_blk * cfg.rho + &self.r_blk
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair<T: Real> {
    /// Source map, `d × p` (`n × p` over the pooled samples in the kernel form).
    pub a: DMatrix<T>,
    /// Target map, same shape as `a`.
    pub b: DMatrix<T>,
    /// Generalized eigenvalues, ascending.
    pub eigenvalues: DVector<T>,
}

impl<T: Real> ProjectionPair<T> {
    /// `W = [A; B]`.
    pub fn stacked(&self) -> DMatrix<T> {
        let (d, p) = self.a.shape();
        let mut w = DMatrix::zeros(2 * d, p);
        w.view_mut((0, 0), (d, p)).copy_from(&self.a);
        w.view_mut((d, 0), (d, p)).copy_from(&self.b);
        w
    }
}

/// The `p` eigenpairs of `(αP + βL + ρU + R) w = η (V + v_ridge·I) w` with
/// smallest `η`, normalized to `wᵀ(V + v_ridge·I)w = 1`.
pub fn solve_generalized_eig<T: Real>(blocks: &SolverMatrices<T>, cfg: &MektConfig<T>) -> Result<ProjectionPair<T>> {
    let d = blocks.feature_dim();
    let p = cfg.subspace_dim;
    if p == 0 || p > 2 * d {
        return Err(Error::dim(format!("subspace dimension {p} with {} eigenpairs available", 2 * d)));
    }
    let lhs = blocks.lhs(cfg);
    let mut rhs = blocks.v_blk.clone();
    for i in 0..2 * d {
        rhs[(i, i)] += cfg.v_ridge;
    }
    let (values, vectors) = generalized_sym_eigen(&lhs, &rhs)?;
    let finite: Vec<usize> = (0..values.len())
        .filter(|&j| values[j].finite() && vectors.column(j).iter().all(|v| v.finite()))
        .take(p)
        .collect();
    if finite.len() < p {
        return Err(Error::dim(format!("only {} finite eigenpairs for subspace dimension {p}", finite.len())));
    }
    let w = vectors.select_columns(&finite);
    Ok(ProjectionPair {
        a: w.rows(0, d).into_owned(),
        b: w.rows(d, d).into_owned(),
        eigenvalues: DVector::from_iterator(p, finite.iter().map(|&j| values[j])),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    /// Joint MMD of the iterate under the pseudo-labels it was solved with.
    pub joint_mmd: f64,
    /// `tr(Wᵀ(αP + βL + ρU + R)W)`.
    pub objective: f64,
    /// Pseudo-labels that changed in this iteration.
    pub label_changes: usize,
}

#[derive(Debug, Clone)]
pub struct MektResult<T: Real> {
    pub projections: ProjectionPair<T>,
    pub predicted_labels: Vec<ClassId>,
    pub initial_labels: Vec<ClassId>,
    pub diagnostics: Vec<IterationDiagnostics>,
}

impl<T: Real> MektResult<T> {
    pub fn project_source(&self, x_s: &DMatrix<T>) -> DMatrix<T> {
        self.projections.a.transpose() * x_s
    }

    pub fn project_target(&self, x_t: &DMatrix<T>) -> DMatrix<T> {
        self.projections.b.transpose() * x_t
    }
}

/// Runs the refinement loop with initial pseudo-labels from the classifier
/// trained on the unprojected source features. Target labels, if present,
/// are never read.
pub fn mekt_fit<T: Real, C: Classifier<T> + ?Sized>(
    source: &FeatureMatrix<T>,
    target: &FeatureMatrix<T>,
    cfg: &MektConfig<T>,
    classifier: &C,
) -> Result<MektResult<T>> {
    let y_s = source.require_labels()?;
    let initial = classifier.fit_predict(source.data(), y_s, target.data())?;
    mekt_fit_with_labels(source, target, cfg, classifier, &initial)
}

/// As [`mekt_fit`], starting from the given pseudo-labels.
pub fn mekt_fit_with_labels<T: Real, C: Classifier<T> + ?Sized>(
    source: &FeatureMatrix<T>,
    target: &FeatureMatrix<T>,
    cfg: &MektConfig<T>,
    classifier: &C,
    initial_labels: &[ClassId],
) -> Result<MektResult<T>> {
    cfg.validate()?;
    if cfg.subspace_dim > source.dim() {
        return Err(Error::Config(format!("subspace dimension {} exceeds feature dimension {}", cfg.subspace_dim, source.dim())));
    }
    let blocks = SolverMatrices::build_static(source, target, cfg)?;
    refine(blocks, source.data(), source.require_labels()?, target.data(), cfg, classifier, initial_labels)
}

pub(crate) fn refine<T: Real, C: Classifier<T> + ?Sized>(
    mut blocks: SolverMatrices<T>,
    x_s: &DMatrix<T>,
    y_s: &[ClassId],
    x_t: &DMatrix<T>,
    cfg: &MektConfig<T>,
    classifier: &C,
    initial_labels: &[ClassId],
) -> Result<MektResult<T>> {
    if initial_labels.len() != x_t.ncols() {
        return Err(Error::dim(format!("{} initial labels for {} target samples", initial_labels.len(), x_t.ncols())));
    }
    let classes = class_ids(y_s);
    let ys_hot = one_hot::<T>(y_s, &classes);
    let mut labels = initial_labels.to_vec();
    let mut diagnostics = Vec::with_capacity(cfg.iterations);
    let mut last = None;
    for it in 0..cfg.iterations {
        let yt_hot = one_hot::<T>(&labels, &classes);
        blocks.r_blk = match cfg.mmd {
            MmdKind::Joint => joint_mmd_blocks(x_s, &ys_hot, x_t, &yt_hot)?,
            MmdKind::Traditional => marginal_conditional_mmd_blocks(x_s, &ys_hot, x_t, &yt_hot)?,
        };
        let proj = solve_generalized_eig(&blocks, cfg)?;
        let w = proj.stacked();
        let objective = (w.transpose() * blocks.lhs(cfg) * &w).trace();
        if !objective.finite() || !all_finite(&w) {
            return Err(Error::Solver(format!("non-finite objective at iteration {}", it + 1)));
        }
        let joint_mmd = joint_mmd_value(x_s, &ys_hot, x_t, &yt_hot, &proj.a, &proj.b)?;
        let next = classifier.fit_predict(&(proj.a.transpose() * x_s), y_s, &(proj.b.transpose() * x_t))?;
        let label_changes = next.iter().zip(&labels).filter(|(a, b)| a != b).count();
        debug!("iteration {}: objective {objective}, joint MMD {joint_mmd}, {label_changes} label changes", it + 1);
        diagnostics.push(IterationDiagnostics { joint_mmd: joint_mmd.as_f64(), objective: objective.as_f64(), label_changes });
        labels = next;
        last = Some(proj);
    }
    Ok(MektResult {
        projections: last.expect("at least one iteration"),
        predicted_labels: labels,
        initial_labels: initial_labels.to_vec(),
        diagnostics,
    })
}
