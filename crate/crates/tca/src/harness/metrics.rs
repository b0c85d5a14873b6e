//! Accuracy proxies: feature fidelity and probe mask agreement.
//!
//! Both compare a compressed forward pass against the uncompressed baseline
//! of the same frame. Fidelity is the mean per-position cosine similarity.
//! Mask agreement pushes both feature sets through one fixed seeded linear
//! probe, takes the per-position argmax class, and scores the compressed
//! predictions against the baseline predictions (treated as ground truth)
//! with mean IoU over the classes the baseline actually predicts.

use crate::error::{Result, TcaError};
use crate::numerics::{argmax_row, matmul, DenseMatrix, Rng};

pub const DEFAULT_PROBE_SEED: u64 = 0xC1A55;
pub const DEFAULT_PROBE_CLASSES: usize = 8;

/// Mean per-position cosine similarity in [-1, 1]. Positions where either
/// vector is exactly zero are skipped and the denominator shrinks.
pub fn fidelity(compressed: &DenseMatrix, baseline: &DenseMatrix) -> Result<f64> {
    if compressed.rows() != baseline.rows() || compressed.cols() != baseline.cols() {
        return Err(TcaError::Shape(format!(
            "fidelity over {}x{} vs {}x{}",
            compressed.rows(),
            compressed.cols(),
            baseline.rows(),
            baseline.cols()
        )));
    }
    let mut sum = 0.0;
    let mut counted = 0usize;
    for r in 0..compressed.rows() {
        let a = compressed.row(r);
        let b = baseline.row(r);
        let na: f64 = a.iter().map(|v| v * v).sum();
        let nb: f64 = b.iter().map(|v| v * v).sum();
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        sum += (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
        counted += 1;
    }
    if counted == 0 {
        return Err(TcaError::Metric(
            "fidelity undefined: every position has a zero vector".into(),
        ));
    }
    Ok(sum / counted as f64)
}

/// The fixed random probe: `channels x classes`, entries uniform(-1, 1)
/// from the documented generator.
pub fn linear_probe(channels: usize, classes: usize, seed: u64) -> DenseMatrix {
    let mut rng = Rng::new(seed);
    DenseMatrix::fill_with(channels, classes, || rng.uniform(-1.0, 1.0))
}

/// Per-position argmax class under a probe (ties to the lowest class).
pub fn predict_classes(features: &DenseMatrix, probe: &DenseMatrix) -> Result<Vec<usize>> {
    let logits = matmul(features, probe)?;
    argmax_row(&logits)
}

/// Mean IoU of compressed predictions against baseline predictions,
/// averaged over the classes present in the baseline.
pub fn mask_agreement_with_probe(
    compressed: &DenseMatrix,
    baseline: &DenseMatrix,
    probe: &DenseMatrix,
) -> Result<f64> {
    if compressed.rows() != baseline.rows() || compressed.cols() != baseline.cols() {
        return Err(TcaError::Shape(format!(
            "mask agreement over {}x{} vs {}x{}",
            compressed.rows(),
            compressed.cols(),
            baseline.rows(),
            baseline.cols()
        )));
    }
    let classes = probe.cols();
    if classes == 0 {
        return Err(TcaError::Metric("probe has no classes".into()));
    }
    let comp = predict_classes(compressed, probe)?;
    let base = predict_classes(baseline, probe)?;

    let mut intersection = vec![0u64; classes];
    let mut union = vec![0u64; classes];
    let mut present = vec![false; classes];
    for (&c, &b) in comp.iter().zip(&base) {
        present[b] = true;
        if c == b {
            intersection[b] += 1;
            union[b] += 1;
        } else {
            union[b] += 1;
            union[c] += 1;
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for cls in 0..classes {
        if present[cls] {
            sum += intersection[cls] as f64 / union[cls] as f64;
            count += 1;
        }
    }
    if count == 0 {
        return Err(TcaError::Metric(
            "mask agreement undefined: baseline predicts no classes".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// [`mask_agreement_with_probe`] with the probe built from a seed.
pub fn mask_agreement(
    compressed: &DenseMatrix,
    baseline: &DenseMatrix,
    probe_seed: u64,
    classes: usize,
) -> Result<f64> {
    if classes == 0 {
        return Err(TcaError::Metric("mask agreement needs classes".into()));
    }
    let probe = linear_probe(compressed.cols(), classes, probe_seed);
    mask_agreement_with_probe(compressed, baseline, &probe)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(seed: u64, rows: usize, cols: usize) -> DenseMatrix {
        let mut rng = Rng::new(seed);
        DenseMatrix::fill_with(rows, cols, || rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn fidelity_of_identical_features_is_one() {
        let a = random(1, 10, 4);
        let f = fidelity(&a, &a).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_of_negated_features_is_minus_one() {
        let a = random(2, 10, 4);
        let mut b = a.clone();
        for v in b.data_mut() {
            *v = -*v;
        }
        let f = fidelity(&a, &b).unwrap();
        assert!((f + 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_of_orthogonal_features_is_zero() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![0.0, 3.0], vec![-4.0, 0.0]]).unwrap();
        assert_eq!(fidelity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn fidelity_skips_zero_vectors() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![5.0, 1.0], vec![1.0, 0.0]]).unwrap();
        // first position skipped, second is a perfect match
        assert!((fidelity(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let zeros = DenseMatrix::zeros(2, 2);
        assert!(matches!(
            fidelity(&zeros, &b),
            Err(TcaError::Metric(_))
        ));
    }

    #[test]
    fn identical_predictions_give_full_agreement() {
        let a = random(3, 32, 6);
        let m = mask_agreement(&a, &a, DEFAULT_PROBE_SEED, 4).unwrap();
        assert_eq!(m, 1.0);
    }

    #[test]
    fn constant_features_cannot_match_multiclass_baseline() {
        let base = random(4, 64, 6);
        let probe = linear_probe(6, 4, DEFAULT_PROBE_SEED);
        let preds = predict_classes(&base, &probe).unwrap();
        let distinct: std::collections::BTreeSet<_> = preds.iter().collect();
        assert!(distinct.len() > 1, "baseline must be multi-class");
        let constant = DenseMatrix::fill_with(64, 6, || 0.5);
        let m = mask_agreement_with_probe(&constant, &base, &probe).unwrap();
        assert!(m < 1.0);
    }

    #[test]
    fn probe_class_permutation_is_neutral() {
        let base = random(5, 40, 6);
        let comp = random(6, 40, 6);
        let probe = linear_probe(6, 4, 9);
        // permute probe columns: classes are renamed consistently for both
        let perm = [2usize, 0, 3, 1];
        let mut permuted = DenseMatrix::zeros(6, 4);
        for r in 0..6 {
            for (new_c, &old_c) in perm.iter().enumerate() {
                permuted.set(r, new_c, probe.get(r, old_c));
            }
        }
        let m1 = mask_agreement_with_probe(&comp, &base, &probe).unwrap();
        let m2 = mask_agreement_with_probe(&comp, &base, &permuted).unwrap();
        assert!((m1 - m2).abs() < 1e-15);
    }

    #[test]
    fn zero_classes_is_an_error() {
        let a = random(7, 8, 4);
        assert!(matches!(
            mask_agreement(&a, &a, 1, 0),
            Err(TcaError::Metric(_))
        ));
    }
}
