//! Dense symmetric helpers shared by the SPD, solver and classifier modules.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::{Error, Real, Result};

pub(crate) fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let half = T::lit(0.5);
    (m + m.transpose()) * half
}

pub(crate) fn max_abs_asymmetry<T: Real>(m: &DMatrix<T>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs().as_f64());
        }
    }
    worst
}

pub(crate) fn all_finite<T: Real>(m: &DMatrix<T>) -> bool {
    m.iter().all(|x| x.finite())
}

/// Symmetric eigendecomposition with eigenvalues in ascending order.
///
/// Equal eigenvalues keep the order the underlying solver produced them in.
pub(crate) fn sym_eigen<T: Real>(m: &DMatrix<T>) -> Result<(DVector<T>, DMatrix<T>)> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "eigendecomposition of non-square {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if !all_finite(m) {
        return Err(Error::DegenerateMatrix("non-finite entries".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(symmetrize(m), T::default_epsilon(), 0)
        .ok_or_else(|| Error::Solver("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// `V diag(f(λ)) Vᵀ`, re-symmetrized.
pub(crate) fn reconstruct<T: Real>(values: &DVector<T>, vectors: &DMatrix<T>) -> DMatrix<T> {
    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= values[j];
    }
    symmetrize(&(scaled * vectors.transpose()))
}

/// Solves the symmetric-definite pencil `A w = λ B w`.
///
/// Returns eigenvalues ascending and eigenvectors normalized so that
/// `wᵀ B w = 1`. Goes through the Cholesky factor of `B`, so `B` must be
/// positive definite.
pub(crate) fn generalized_sym_eigen<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> Result<(DVector<T>, DMatrix<T>)> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::dim(format!(
            "pencil shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let chol = Cholesky::new(symmetrize(b))
        .ok_or_else(|| Error::Solver("right-hand matrix of pencil is not positive definite".into()))?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&symmetrize(a))
        .ok_or_else(|| Error::Solver("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Solver("triangular solve failed".into()))?;
    let (values, z) = sym_eigen(&c)?;
    let w = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Solver("back substitution failed".into()))?;
    Ok((values, w))
}

pub(crate) fn frobenius<T: Real>(m: &DMatrix<T>) -> T {
    m.norm()
}
