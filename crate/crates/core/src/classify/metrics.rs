use crate::features::class_ids;
use crate::{ClassId, Error, Result};

/// Balanced classification accuracy: the mean per-class recall over the
/// classes present in `truth`. Predictions of unseen classes count as wrong.
pub fn bca(truth: &[ClassId], predicted: &[ClassId]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::dim(format!("{} true labels vs {} predictions", truth.len(), predicted.len())));
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    let classes = class_ids(truth);
    let mut total = 0.0;
    for &k in &classes {
        let (mut n, mut tp) = (0usize, 0usize);
        for (&t, &p) in truth.iter().zip(predicted) {
            if t == k {
                n += 1;
                tp += usize::from(p == k);
            }
        }
        total += tp as f64 / n as f64;
    }
    Ok(total / classes.len() as f64)
}

pub fn accuracy(truth: &[ClassId], predicted: &[ClassId]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::dim(format!("{} true labels vs {} predictions", truth.len(), predicted.len())));
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(truth.iter().zip(predicted).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert_eq!(bca(&[1, 2, 2, 1], &[1, 2, 2, 1]).unwrap(), 1.0);
        let truth: Vec<u32> = std::iter::once(1).chain(std::iter::repeat(2).take(9)).collect();
        assert_eq!(bca(&truth, &[2; 10]).unwrap(), 0.5);
        assert_eq!(bca(&[1, 1, 2, 2, 2], &[1, 2, 2, 2, 2]).unwrap(), 0.75);
    }

    #[test]
    fn unseen_predicted_class_is_wrong() {
        assert_eq!(bca(&[1, 1, 2, 2], &[3, 1, 2, 2]).unwrap(), 0.75);
    }

    #[test]
    fn balanced_bca_is_accuracy() {
        let t = [1, 1, 2, 2, 3, 3];
        let p = [1, 2, 2, 3, 3, 3];
        assert!((bca(&t, &p).unwrap() - accuracy(&t, &p).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(bca(&[1], &[1, 2]).is_err());
        assert!(matches!(bca(&[], &[]), Err(Error::EmptyInput)));
    }
}
