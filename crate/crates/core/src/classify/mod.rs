//! Classifiers, spatial filters and the balanced-accuracy metric.

mod csp;
mod lda;
mod mdm;
mod metrics;

pub use csp::{csp_features, csp_feature_matrix, csp_fit, CspFilter};
pub use lda::{lda_fit, lda_predict, LdaClassifier, LdaModel, Shrinkage};
pub use mdm::{mdm_fit, mdm_predict, MdmModel};
pub use metrics::{accuracy, bca};

use nalgebra::DMatrix;

use crate::{ClassId, Real, Result};

/// A classifier that is trained and applied in one call on column-sample
/// matrices. Implementations must be deterministic.
pub trait Classifier<T: Real> {
    fn fit_predict(&self, train: &DMatrix<T>, labels: &[ClassId], test: &DMatrix<T>) -> Result<Vec<ClassId>>;
}

impl<T: Real, C: Classifier<T> + ?Sized> Classifier<T> for &C {
    fn fit_predict(&self, train: &DMatrix<T>, labels: &[ClassId], test: &DMatrix<T>) -> Result<Vec<ClassId>> {
        (**self).fit_predict(train, labels, test)
    }
}
