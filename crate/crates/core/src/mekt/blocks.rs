use nalgebra::{DMatrix, DVector};

use crate::features::{class_ids, FeatureMatrix};
use crate::linalg::symmetrize;
use crate::{ClassId, Error, Real, Result};

/// Within-class and between-class scatter of a labeled feature matrix.
pub fn scatter_matrices<T: Real>(x_s: &FeatureMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    scatter_from_columns(x_s.data(), x_s.require_labels()?, None)
}

/// `S_w = Σ_k Σ_i (x_i − m̄_k)(x_i − m̄_k)ᵀ` and
/// `S_b = Σ_k n_k (m̄_k − m̄)(m̄_k − m̄)ᵀ`. `global_mean` replaces `m̄`
/// when given.
pub(crate) fn scatter_from_columns<T: Real>(
    x: &DMatrix<T>,
    labels: &[ClassId],
    global_mean: Option<&DVector<T>>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if labels.len() != x.ncols() {
        return Err(Error::dim(format!("{} labels for {} samples", labels.len(), x.ncols())));
    }
    let classes = class_ids(labels);
    if classes.len() < 2 {
        return Err(Error::InsufficientClasses(classes.len()));
    }
    let d = x.nrows();
    let overall = match global_mean {
        Some(m) if m.len() == d => m.clone(),
        Some(m) => return Err(Error::dim(format!("global mean of length {} for {d} features", m.len()))),
        None => x.column_mean(),
    };
    let mut s_w = DMatrix::zeros(d, d);
    let mut s_b = DMatrix::zeros(d, d);
    for &k in &classes {
        let idx: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] == k).collect();
        let members = x.select_columns(&idx);
        let m_k = members.column_mean();
        let mut centred = members;
        for mut col in centred.column_iter_mut() {
            col -= &m_k;
        }
        s_w += &centred * centred.transpose();
        let diff = &m_k - &overall;
        s_b += &diff * diff.transpose() * T::from_usize_lossy(idx.len());
    }
    Ok((symmetrize(&s_w), symmetrize(&s_b)))
}

/// Normalized kNN-graph Laplacian and the centering matrix of the target
/// samples.
pub fn graph_laplacian<T: Real>(x_t: &FeatureMatrix<T>, knn: usize, sigma: T) -> Result<(DMatrix<T>, DMatrix<T>)> {
    laplacian_from_columns(x_t.data(), knn, sigma)
}

pub(crate) fn laplacian_from_columns<T: Real>(x: &DMatrix<T>, knn: usize, sigma: T) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let n = x.ncols();
    if knn == 0 {
        return Err(Error::Config("neighbour count must be positive".into()));
    }
    if n <= knn {
        return Err(Error::InsufficientData(format!("{n} target samples for {knn} neighbours")));
    }
    if !(sigma > T::zero()) {
        return Err(Error::Config(format!("graph kernel width {sigma} must be positive")));
    }
    let mut dist2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (x.column(i) - x.column(j)).norm_squared();
            dist2[(i, j)] = d;
            dist2[(j, i)] = d;
        }
    }
    let mut adjacent = vec![false; n * n];
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        // stable sort keeps index order among equal distances
        others.sort_by(|&a, &b| dist2[(i, a)].partial_cmp(&dist2[(i, b)]).unwrap_or(std::cmp::Ordering::Equal));
        for &j in &others[..knn] {
            adjacent[i * n + j] = true;
            adjacent[j * n + i] = true;
        }
    }
    let two_s2 = T::lit(2.0) * sigma * sigma;
    let s = DMatrix::from_fn(n, n, |i, j| {
        if adjacent[i * n + j] {
            (-dist2[(i, j)] / two_s2).exp()
        } else {
            T::zero()
        }
    });
    let inv_sqrt_deg: Vec<T> = s
        .row_iter()
        .map(|r| {
            let d = r.sum();
            if d > T::zero() {
                T::one() / d.sqrt()
            } else {
                T::zero()
            }
        })
        .collect();
    let l = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { T::one() } else { T::zero() };
        delta - inv_sqrt_deg[i] * s[(i, j)] * inv_sqrt_deg[j]
    });
    Ok((symmetrize(&l), centering(n)))
}

pub(crate) fn centering<T: Real>(n: usize) -> DMatrix<T> {
    let inv = T::one() / T::from_usize_lossy(n);
    DMatrix::from_fn(n, n, |i, j| if i == j { T::one() - inv } else { -inv })
}

/// `n × l` indicator matrix over the given class list. Labels outside the
/// list leave their row zero.
pub fn one_hot<T: Real>(labels: &[ClassId], classes: &[ClassId]) -> DMatrix<T> {
    let mut y = DMatrix::zeros(labels.len(), classes.len());
    for (i, l) in labels.iter().enumerate() {
        if let Some(k) = classes.iter().position(|c| c == l) {
            y[(i, k)] = T::one();
        }
    }
    y
}

fn check_mmd_shapes<T: Real>(x_s: &DMatrix<T>, y_s: &DMatrix<T>, x_t: &DMatrix<T>, y_t: &DMatrix<T>) -> Result<()> {
    if x_s.nrows() != x_t.nrows() {
        return Err(Error::dim(format!("source has {} features, target {}", x_s.nrows(), x_t.nrows())));
    }
    if y_s.nrows() != x_s.ncols() || y_t.nrows() != x_t.ncols() {
        return Err(Error::dim("one-hot rows must match sample counts"));
    }
    if y_s.ncols() != y_t.ncols() {
        return Err(Error::dim(format!("{} source classes vs {} target classes", y_s.ncols(), y_t.ncols())));
    }
    if x_s.ncols() == 0 || x_t.ncols() == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Stacks `[Q_S; −Q_T]` from per-class mean-like columns so that the block
/// matrix is `G Gᵀ`.
fn stacked<T: Real>(q_s: &DMatrix<T>, q_t: &DMatrix<T>) -> DMatrix<T> {
    let d = q_s.nrows();
    let mut g = DMatrix::zeros(2 * d, q_s.ncols());
    g.view_mut((0, 0), (d, q_s.ncols())).copy_from(q_s);
    g.view_mut((d, 0), (d, q_t.ncols())).copy_from(&(-q_t));
    g
}

/// Joint-probability MMD block: `tr(Wᵀ R W) = ‖N_Sᵀ X_Sᵀ A − N_Tᵀ X_Tᵀ B‖²_F`
/// with `N = Y / n`.
pub fn joint_mmd_blocks<T: Real>(x_s: &DMatrix<T>, y_s: &DMatrix<T>, x_t: &DMatrix<T>, y_t: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_mmd_shapes(x_s, y_s, x_t, y_t)?;
    let q_s = x_s * (y_s / T::from_usize_lossy(x_s.ncols()));
    let q_t = x_t * (y_t / T::from_usize_lossy(x_t.ncols()));
    let g = stacked(&q_s, &q_t);
    Ok(symmetrize(&(&g * g.transpose())))
}

/// Marginal plus per-class conditional MMD block. Classes empty on either
/// side contribute no conditional term.
pub fn marginal_conditional_mmd_blocks<T: Real>(
    x_s: &DMatrix<T>,
    y_s: &DMatrix<T>,
    x_t: &DMatrix<T>,
    y_t: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    check_mmd_shapes(x_s, y_s, x_t, y_t)?;
    let l = y_s.ncols();
    let mut cols_s = vec![DVector::from_element(x_s.ncols(), T::one() / T::from_usize_lossy(x_s.ncols()))];
    let mut cols_t = vec![DVector::from_element(x_t.ncols(), T::one() / T::from_usize_lossy(x_t.ncols()))];
    for k in 0..l {
        let ns = y_s.column(k).sum();
        let nt = y_t.column(k).sum();
        if ns > T::zero() && nt > T::zero() {
            cols_s.push(y_s.column(k) / ns);
            cols_t.push(y_t.column(k) / nt);
        }
    }
    let q_s = x_s * DMatrix::from_columns(&cols_s);
    let q_t = x_t * DMatrix::from_columns(&cols_t);
    let g = stacked(&q_s, &q_t);
    Ok(symmetrize(&(&g * g.transpose())))
}

/// Direct evaluation of the joint MMD for given projections.
pub fn joint_mmd_value<T: Real>(
    x_s: &DMatrix<T>,
    y_s: &DMatrix<T>,
    x_t: &DMatrix<T>,
    y_t: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> Result<T> {
    check_mmd_shapes(x_s, y_s, x_t, y_t)?;
    let n_s = (y_s / T::from_usize_lossy(x_s.ncols())).transpose();
    let n_t = (y_t / T::from_usize_lossy(x_t.ncols())).transpose();
    Ok((n_s * x_s.transpose() * a - n_t * x_t.transpose() * b).norm_squared())
}

/// `[[I, −I], [−I, 2I]]`.
pub fn u_block<T: Real>(d: usize) -> DMatrix<T> {
    let mut u = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        u[(i, i)] = T::one();
        u[(i, d + i)] = -T::one();
        u[(d + i, i)] = -T::one();
        u[(d + i, d + i)] = T::lit(2.0);
    }
    u
}

pub(crate) fn block_diag<T: Real>(top: &DMatrix<T>, bottom: &DMatrix<T>) -> DMatrix<T> {
    let (a, b) = (top.nrows(), bottom.nrows());
    let mut m = DMatrix::zeros(a + b, a + b);
    m.view_mut((0, 0), (a, a)).copy_from(top);
    m.view_mut((a, a), (b, b)).copy_from(bottom);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_labels(rng: &mut impl Rng, n: usize, l: u32) -> Vec<ClassId> {
        let mut y: Vec<ClassId> = (0..n).map(|i| (i as u32 % l) + 1).collect();
        for i in (1..n).rev() {
            y.swap(i, rng.random_range(0..=i));
        }
        y
    }

    #[test]
    fn scatter_of_identical_samples_is_zero() {
        let x = DMatrix::from_element(3, 4, 2.0);
        let (w, b) = scatter_from_columns(&x, &[1, 2, 1, 2], None).unwrap();
        assert_eq!(w.norm(), 0.0);
        assert_eq!(b.norm(), 0.0);
    }

    #[test]
    fn scatter_two_points_per_class() {
        let x = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, -1.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        let (w, b) = scatter_from_columns(&x, &[1, 1, 2, 2], None).unwrap();
        assert_eq!(w.norm(), 0.0);
        let expected = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.0]);
        assert!((b - expected).norm() < 1e-14);
    }

    #[test]
    fn scatter_decomposes_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let x = random(&mut rng, 5, 30);
        let y = random_labels(&mut rng, 30, 3);
        let (w, b) = scatter_from_columns(&x, &y, None).unwrap();
        let m = x.column_mean();
        let mut total = DMatrix::zeros(5, 5);
        for c in x.column_iter() {
            let d = c - &m;
            total += &d * d.transpose();
        }
        assert!((w + b - total).norm() < 1e-8);
    }

    #[test]
    fn scatter_needs_two_classes() {
        let x = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(scatter_from_columns(&x, &[1, 1, 1], None), Err(Error::InsufficientClasses(1))));
    }

    #[test]
    fn two_node_graph() {
        let x = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 1.0, 1.0]);
        let (l, h) = laplacian_from_columns(&x, 1, 1.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert!((l - expected).norm() < 1e-15);
        assert!((h * DVector::from_element(2, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn laplacian_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let x = random(&mut rng, 3, 20);
        let (l, h) = laplacian_from_columns(&x, 4, 1.0).unwrap();
        // rebuild S and D independently from the OR rule
        let n = 20;
        let d2 = |i: usize, j: usize| (x.column(i) - x.column(j)).norm_squared();
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| d2(i, a).partial_cmp(&d2(i, b)).unwrap());
            for &j in &order[..4] {
                s[(i, j)] = (-d2(i, j) / 2.0).exp();
                s[(j, i)] = s[(i, j)];
            }
        }
        let deg: Vec<f64> = s.row_iter().map(|r| r.sum()).collect();
        for _ in 0..10 {
            let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let quad = v.dot(&(&l * &v));
            let mut oracle = 0.0;
            for i in 0..n {
                for j in 0..n {
                    oracle += 0.5 * s[(i, j)] * (v[i] / deg[i].sqrt() - v[j] / deg[j].sqrt()).powi(2);
                }
            }
            assert!((quad - oracle).abs() < 1e-10 && quad >= -1e-12);
        }
        assert!((&h * &h - &h).norm() < 1e-10);
        assert!((h * DVector::from_element(n, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn isolated_duplicate_has_identity_row() {
        // three coincident points plus one far away with a vanishing kernel
        let x = DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 0.0, 1e3]);
        let (l, _) = laplacian_from_columns(&x, 1, 1.0).unwrap();
        assert_eq!(l[(3, 3)], 1.0);
        assert!(l.iter().all(|v| f64::is_finite(*v)));
    }

    #[test]
    fn laplacian_preconditions() {
        let x = DMatrix::<f64>::zeros(2, 3);
        assert!(laplacian_from_columns(&x, 3, 1.0).is_err());
        assert!(matches!(laplacian_from_columns(&x, 1, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn joint_block_quadratic_form_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let (d, p) = (4, 3);
        let x_s = random(&mut rng, d, 12);
        let x_t = random(&mut rng, d, 9);
        let classes = [1, 2, 3];
        let y_s = one_hot::<f64>(&random_labels(&mut rng, 12, 3), &classes);
        let y_t = one_hot::<f64>(&[1, 1, 1, 1, 2, 2, 2, 2, 2], &classes);
        let r = joint_mmd_blocks(&x_s, &y_s, &x_t, &y_t).unwrap();
        assert!((&r - r.transpose()).norm() < 1e-12);
        for _ in 0..5 {
            let w = random(&mut rng, 2 * d, p);
            let a = w.rows(0, d).into_owned();
            let b = w.rows(d, d).into_owned();
            let quad = (w.transpose() * &r * &w).trace();
            let direct = joint_mmd_value(&x_s, &y_s, &x_t, &y_t, &a, &b).unwrap();
            assert!((quad - direct).abs() < 1e-8);
        }
    }

    #[test]
    fn joint_mmd_hand_value() {
        let x_s = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let x_t = DMatrix::zeros(2, 1);
        let y = DMatrix::from_element(1, 1, 1.0);
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert_eq!(joint_mmd_value(&x_s, &y, &x_t, &y, &a, &a).unwrap(), 1.0);
    }

    #[test]
    fn identical_domains_have_zero_mmd() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let x = random(&mut rng, 3, 10);
        let y = one_hot::<f64>(&random_labels(&mut rng, 10, 2), &[1, 2]);
        let w = random(&mut rng, 3, 2);
        let ww = DMatrix::from_fn(6, 2, |i, j| w[(i % 3, j)]);
        for r in [joint_mmd_blocks(&x, &y, &x, &y).unwrap(), marginal_conditional_mmd_blocks(&x, &y, &x, &y).unwrap()] {
            assert!((ww.transpose() * r * &ww).trace().abs() < 1e-12);
        }
    }

    /// Marginal plus conditional terms evaluated from sums over samples.
    fn traditional_direct(x_s: &DMatrix<f64>, ys: &[ClassId], x_t: &DMatrix<f64>, yt: &[ClassId], a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let ps = a.transpose() * x_s;
        let pt = b.transpose() * x_t;
        let mut total = (ps.column_mean() - pt.column_mean()).norm_squared();
        for k in class_ids(ys) {
            let is: Vec<usize> = (0..ys.len()).filter(|&i| ys[i] == k).collect();
            let it: Vec<usize> = (0..yt.len()).filter(|&i| yt[i] == k).collect();
            if it.is_empty() {
                continue;
            }
            total += (ps.select_columns(&is).column_mean() - pt.select_columns(&it).column_mean()).norm_squared();
        }
        total
    }

    #[test]
    fn traditional_block_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let d = 4;
        let x_s = random(&mut rng, d, 15);
        let x_t = random(&mut rng, d, 10);
        let ys = random_labels(&mut rng, 15, 3);
        // class 3 never predicted on the target
        let yt: Vec<ClassId> = (0..10).map(|i| (i % 2) as u32 + 1).collect();
        let classes = [1, 2, 3];
        let r = marginal_conditional_mmd_blocks(&x_s, &one_hot(&ys, &classes), &x_t, &one_hot(&yt, &classes)).unwrap();
        let w = random(&mut rng, 2 * d, 2);
        let a = w.rows(0, d).into_owned();
        let b = w.rows(d, d).into_owned();
        let quad = (w.transpose() * r * &w).trace();
        assert!((quad - traditional_direct(&x_s, &ys, &x_t, &yt, &a, &b)).abs() < 1e-8);
    }

    #[test]
    fn single_class_traditional_is_twice_joint() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let x_s = random(&mut rng, 3, 7);
        let x_t = random(&mut rng, 3, 5);
        let y_s = DMatrix::from_element(7, 1, 1.0);
        let y_t = DMatrix::from_element(5, 1, 1.0);
        let joint = joint_mmd_blocks(&x_s, &y_s, &x_t, &y_t).unwrap();
        let trad = marginal_conditional_mmd_blocks(&x_s, &y_s, &x_t, &y_t).unwrap();
        assert!((trad - joint * 2.0).norm() < 1e-12);
    }

    #[test]
    fn class_count_mismatch() {
        let x = DMatrix::<f64>::zeros(2, 2);
        let y2 = DMatrix::from_element(2, 2, 0.5);
        let y3 = DMatrix::from_element(2, 3, 0.5);
        assert!(matches!(joint_mmd_blocks(&x, &y2, &x, &y3), Err(Error::Dimension(_))));
    }

    #[test]
    fn u_block_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let d = 5;
        let u = u_block::<f64>(d);
        let w = random(&mut rng, 2 * d, 3);
        let a = w.rows(0, d);
        let b = w.rows(d, d);
        let expected = (b - a).norm_squared() + b.norm_squared();
        assert!(((w.transpose() * u * &w).trace() - expected).abs() < 1e-10);
    }
}
