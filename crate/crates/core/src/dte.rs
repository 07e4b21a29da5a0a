//! Domain transferability estimation: rank source domains by the ratio of
//! their class separation to their distance from the target.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::mekt::scatter_matrices;
use crate::{Error, Real, Result};

pub const DIF_EPSILON: f64 = 1e-12;

/// Matrix norm applied to both scatter matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScatterNorm {
    /// Sum of absolute entries.
    #[default]
    Entrywise,
    /// Maximum absolute column sum.
    Induced,
}

impl std::str::FromStr for ScatterNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "entrywise" => Ok(ScatterNorm::Entrywise),
            "induced" => Ok(ScatterNorm::Induced),
            other => Err(Error::Config(format!("unknown scatter norm {other:?}"))),
        }
    }
}

impl ScatterNorm {
    pub fn apply<T: Real>(self, m: &DMatrix<T>) -> f64 {
        match self {
            ScatterNorm::Entrywise => m.iter().map(|v| v.abs().as_f64()).sum(),
            ScatterNorm::Induced => m
                .column_iter()
                .map(|c| c.iter().map(|v| v.abs().as_f64()).sum::<f64>())
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferabilityScore {
    pub source_id: String,
    pub dis: f64,
    pub dif: f64,
    pub score: f64,
}

/// Two-group scatter `n_S(m_S − m̄)(m_S − m̄)ᵀ + n_T(m_T − m̄)(m_T − m̄)ᵀ`
/// with `m̄` the pooled mean.
pub fn between_domain_scatter<T: Real>(source: &FeatureMatrix<T>, target: &FeatureMatrix<T>) -> Result<DMatrix<T>> {
    if source.dim() != target.dim() {
        return Err(Error::dim(format!("source dimension {} vs target {}", source.dim(), target.dim())));
    }
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (n_s, n_t) = (T::from_usize_lossy(source.len()), T::from_usize_lossy(target.len()));
    let m_s = source.data().column_mean();
    let m_t = target.data().column_mean();
    let pooled = (&m_s * n_s + &m_t * n_t) / (n_s + n_t);
    let ds = m_s - &pooled;
    let dt = m_t - &pooled;
    Ok(&ds * ds.transpose() * n_s + &dt * dt.transpose() * n_t)
}

pub fn transferability<T: Real>(source: &FeatureMatrix<T>, target: &FeatureMatrix<T>, norm: ScatterNorm) -> Result<TransferabilityScore> {
    let (_, s_b) = scatter_matrices(source)?;
    let between = between_domain_scatter(source, target)?;
    let dis = norm.apply(&s_b);
    let dif = norm.apply(&between);
    Ok(TransferabilityScore { source_id: source.domain_id().to_string(), dis, dif, score: dis / dif.max(DIF_EPSILON) })
}

pub fn rank_sources<T: Real>(sources: &[FeatureMatrix<T>], target: &FeatureMatrix<T>, norm: ScatterNorm) -> Result<Vec<TransferabilityScore>> {
    let mut scores = sources.iter().map(|s| transferability(s, target, norm)).collect::<Result<Vec<_>>>()?;
    sort_scores(&mut scores);
    Ok(scores)
}

/// Descending score, ties by ascending source id.
pub fn sort_scores(scores: &mut [TransferabilityScore]) {
    scores.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.source_id.cmp(&b.source_id))
    });
}

/// `round((z − 1) / 2)`, at least one.
pub fn default_selection_size(z: usize) -> usize {
    (((z as f64 - 1.0) / 2.0).round() as usize).max(1)
}

/// Ids of the `z_star` highest-scoring sources, best first.
pub fn select_sources(scores: &[TransferabilityScore], z_star: usize) -> Result<Vec<String>> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if z_star == 0 || z_star > scores.len() {
        return Err(Error::Config(format!("cannot select {z_star} of {} sources", scores.len())));
    }
    let mut sorted = scores.to_vec();
    sort_scores(&mut sorted);
    Ok(sorted.into_iter().take(z_star).map(|s| s.source_id).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn score(id: &str, r: f64) -> TransferabilityScore {
        TransferabilityScore { source_id: id.into(), dis: r, dif: 1.0, score: r }
    }

    fn cloud(rng: &mut impl Rng, d: usize, n: usize, shift: f64, sep: f64, id: &str) -> FeatureMatrix<f64> {
        let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32 + 1).collect();
        let x = DMatrix::from_fn(d, n, |r, c| {
            let class = if labels[c] == 1 { -sep } else { sep };
            rng.random_range(-1.0..1.0) + shift + if r == 0 { class } else { 0.0 }
        });
        FeatureMatrix::new(x, Some(labels), id).unwrap()
    }

    #[test]
    fn selection_examples() {
        let s = [score("a", 3.0), score("b", 1.0), score("c", 2.0)];
        assert_eq!(select_sources(&s, 2).unwrap(), vec!["a", "c"]);
        assert_eq!(select_sources(&s, 1).unwrap(), vec!["a"]);
        assert_eq!(select_sources(&s, 3).unwrap(), vec!["a", "c", "b"]);
        assert!(matches!(select_sources(&[], 1), Err(Error::EmptyInput)));
        assert!(select_sources(&s, 4).is_err());
    }

    #[test]
    fn ties_break_by_id_and_input_order_is_irrelevant() {
        let s = [score("b", 1.0), score("a", 1.0), score("c", 1.0)];
        let mut reversed = s.to_vec();
        reversed.reverse();
        assert_eq!(select_sources(&s, 2).unwrap(), vec!["a", "b"]);
        assert_eq!(select_sources(&reversed, 2).unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn default_sizes() {
        assert_eq!(default_selection_size(9), 4);
        assert_eq!(default_selection_size(8), 4);
        assert_eq!(default_selection_size(6), 3);
        assert_eq!(default_selection_size(2), 1);
        assert_eq!(default_selection_size(1), 1);
    }

    #[test]
    fn coincident_classes_score_zero() {
        let x = DMatrix::from_fn(3, 4, |r, _| r as f64);
        let s = FeatureMatrix::new(x.clone(), Some(vec![1, 2, 1, 2]), "s").unwrap();
        let t = FeatureMatrix::new(x * 2.0, None, "t").unwrap();
        let r = transferability(&s, &t, ScatterNorm::Entrywise).unwrap();
        assert_eq!(r.dis, 0.0);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn identical_target_ranks_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let twin = cloud(&mut rng, 4, 40, 0.0, 1.0, "twin");
        let far = cloud(&mut rng, 4, 40, 2.0, 1.0, "far");
        let target = twin.without_labels();
        let ranked = rank_sources(&[far, twin.clone()], &target, ScatterNorm::Entrywise).unwrap();
        assert_eq!(ranked[0].source_id, "twin");
        assert!(ranked[0].dif < 1e-20);
        assert_eq!(ranked[0].score, ranked[0].dis / DIF_EPSILON);
    }

    #[test]
    fn ranking_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let target = cloud(&mut rng, 3, 50, 0.0, 1.0, "t").without_labels();
        let sources: Vec<_> = [("s1", 0.3), ("s2", 1.5), ("s3", 0.8)]
            .iter()
            .map(|&(id, shift)| cloud(&mut rng, 3, 40, shift, 1.0, id))
            .collect();
        let ranked = rank_sources(&sources, &target, ScatterNorm::Entrywise).unwrap();
        let mut brute: Vec<(String, f64)> = sources
            .iter()
            .map(|s| {
                let x = s.data();
                let y = s.labels().unwrap();
                let m = x.column_mean();
                let mut sb = DMatrix::zeros(3, 3);
                for k in [1, 2] {
                    let idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == k).collect();
                    let d = x.select_columns(&idx).column_mean() - &m;
                    sb += &d * d.transpose() * idx.len() as f64;
                }
                let all = DMatrix::from_columns(&x.column_iter().chain(target.data().column_iter()).collect::<Vec<_>>());
                let pooled = all.column_mean();
                let ds = &m - &pooled;
                let dt = target.data().column_mean() - &pooled;
                let st = &ds * ds.transpose() * 40.0 + &dt * dt.transpose() * 50.0;
                (s.domain_id().to_string(), sb.abs().sum() / st.abs().sum())
            })
            .collect();
        brute.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        for (r, (id, v)) in ranked.iter().zip(&brute) {
            assert_eq!(&r.source_id, id);
            assert!((r.score - v).abs() <= 1e-10 * v.abs());
        }
    }

    #[test]
    fn invariant_under_common_coordinate_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        let s = cloud(&mut rng, 4, 30, 0.5, 1.0, "s");
        let t = cloud(&mut rng, 4, 30, 0.0, 1.0, "t").without_labels();
        let perm = [2usize, 0, 3, 1];
        let permute = |f: &FeatureMatrix<f64>| {
            let rows: Vec<_> = perm.iter().map(|&i| f.data().row(i).into_owned()).collect();
            FeatureMatrix::new(DMatrix::from_rows(&rows), f.labels().map(|l| l.to_vec()), f.domain_id()).unwrap()
        };
        for norm in [ScatterNorm::Entrywise, ScatterNorm::Induced] {
            let a = transferability(&s, &t, norm).unwrap();
            let b = transferability(&permute(&s), &permute(&t), norm).unwrap();
            assert!((a.score - b.score).abs() <= 1e-8 * a.score);
        }
    }

    #[test]
    fn single_class_source_fails() {
        let s = FeatureMatrix::new(DMatrix::<f64>::zeros(2, 3), Some(vec![1, 1, 1]), "s").unwrap();
        let t = s.without_labels();
        assert!(matches!(transferability(&s, &t, ScatterNorm::Entrywise), Err(Error::InsufficientClasses(1))));
    }

    #[test]
    fn induced_norm_hand_value() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -4.0, 2.0, 1.0]);
        assert_eq!(ScatterNorm::Induced.apply(&m), 5.0);
        assert_eq!(ScatterNorm::Entrywise.apply(&m), 8.0);
    }
}
