use crate::features::class_ids;
use crate::spd::{mean, riemannian_distance, MeanKind, MeanSolverConfig, SpdMatrix};
use crate::{ClassId, Error, Real, Result};

/// Minimum distance to mean: nearest class centroid under the
/// affine-invariant distance.
#[derive(Debug, Clone)]
pub struct MdmModel<T: Real> {
    pub class_ids: Vec<ClassId>,
    pub centroids: Vec<SpdMatrix<T>>,
}

pub fn mdm_fit<T: Real>(covariances: &[SpdMatrix<T>], labels: &[ClassId], cfg: &MeanSolverConfig<T>) -> Result<MdmModel<T>> {
    if covariances.len() != labels.len() {
        return Err(Error::dim(format!("{} labels for {} covariances", labels.len(), covariances.len())));
    }
    let classes = class_ids(labels);
    if classes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let centroids = classes
        .iter()
        .map(|&k| {
            let members: Vec<_> = covariances
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == k)
                .map(|(p, _)| p.clone())
                .collect();
            mean(&members, MeanKind::Riemannian, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MdmModel { class_ids: classes, centroids })
}

/// Ties (within the scalar's tie tolerance) go to the lower class id.
pub fn mdm_predict<T: Real>(model: &MdmModel<T>, covariances: &[SpdMatrix<T>]) -> Result<Vec<ClassId>> {
    let tol = T::TIE_TOL;
    covariances
        .iter()
        .map(|p| {
            let mut best = 0usize;
            let mut best_d = riemannian_distance(p, &model.centroids[0])?.as_f64();
            for k in 1..model.centroids.len() {
                let d = riemannian_distance(p, &model.centroids[k])?.as_f64();
                if d < best_d - tol * (1.0 + best_d) {
                    best = k;
                    best_d = d;
                }
            }
            Ok(model.class_ids[best])
        })
        .collect()
}
