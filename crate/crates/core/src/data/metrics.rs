//! Normalized entropy and AUC.
//!
//! NE is the mean cross-entropy of the predictions divided by the cross
//! entropy of the constant predictor at the label mean: 1.0 means the model
//! carries no information beyond the base rate, lower is better.

use super::DataError;
use serde::{Deserialize, Serialize};

/// Predictions are clamped into [CLAMP, 1-CLAMP] before taking logs.
pub const CLAMP: f64 = 1e-12;

pub fn ne(predictions: &[f64], labels: &[u8]) -> Result<f64, DataError> {
    assert_eq!(predictions.len(), labels.len(), "ne input lengths");
    let n = labels.len();
    let positives: usize = labels.iter().map(|&l| usize::from(l)).sum();
    if n == 0 || positives == 0 || positives == n {
        return Err(DataError::DegenerateLabels);
    }
    let mean = positives as f64 / n as f64;
    let base = -(mean * mean.ln() + (1.0 - mean) * (1.0 - mean).ln());
    let mut ce = 0.0;
    for (&p, &y) in predictions.iter().zip(labels) {
        let p = p.clamp(CLAMP, 1.0 - CLAMP);
        ce -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(ce / n as f64 / base)
}

/// Probability that a random positive outranks a random negative, ties
/// counted half (rank statistic / Mann-Whitney U).
pub fn auc(predictions: &[f64], labels: &[u8]) -> Result<f64, DataError> {
    assert_eq!(predictions.len(), labels.len(), "auc input lengths");
    let n = labels.len();
    let n_pos: usize = labels.iter().map(|&l| usize::from(l)).sum();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(DataError::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| predictions[a].partial_cmp(&predictions[b]).unwrap());
    // Average ranks across tied prediction groups.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && predictions[order[j + 1]] == predictions[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LengthBucket {
    pub max_len: usize,
    pub auc: f64,
    pub ne: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub ne: f64,
    pub count: usize,
    pub buckets: Vec<LengthBucket>,
}

impl EvalReport {
    /// Builds the report, bucketing examples by history length at the given
    /// upper bounds. Buckets with degenerate labels are skipped.
    pub fn build(
        predictions: &[f64],
        labels: &[u8],
        history_lens: &[usize],
        bucket_bounds: &[usize],
    ) -> Result<Self, DataError> {
        let overall_auc = auc(predictions, labels)?;
        let overall_ne = ne(predictions, labels)?;
        let mut buckets = Vec::new();
        let mut lo = 0usize;
        for &hi in bucket_bounds {
            let idx: Vec<usize> = history_lens
                .iter()
                .enumerate()
                .filter(|(_, &l)| l >= lo && l < hi)
                .map(|(i, _)| i)
                .collect();
            if !idx.is_empty() {
                let p: Vec<f64> = idx.iter().map(|&i| predictions[i]).collect();
                let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
                if let (Ok(a), Ok(n)) = (auc(&p, &y), ne(&p, &y)) {
                    buckets.push(LengthBucket { max_len: hi, auc: a, ne: n, count: idx.len() });
                }
            }
            lo = hi;
        }
        Ok(Self { auc: overall_auc, ne: overall_ne, count: labels.len(), buckets })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_mean_predictor_has_ne_one() {
        let labels = vec![1, 0, 0, 1, 0, 1, 1, 0, 0, 0];
        let mean = 0.4;
        let preds = vec![mean; 10];
        assert!((ne(&preds, &labels).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictor_ne_near_zero() {
        let labels = vec![1, 0, 1, 0];
        let preds: Vec<f64> = labels.iter().map(|&y| f64::from(y)).collect();
        assert!(ne(&preds, &labels).unwrap() < 1e-10);
    }

    #[test]
    fn ne_hand_example() {
        // labels [1,0], preds [0.8,0.2]: CE = -ln 0.8, base = ln 2.
        let got = ne(&[0.8, 0.2], &[1, 0]).unwrap();
        assert!((got - 0.32192).abs() < 1e-5);
    }

    #[test]
    fn ne_degenerate_labels() {
        assert!(matches!(ne(&[0.5, 0.5], &[1, 1]), Err(DataError::DegenerateLabels)));
    }

    #[test]
    fn auc_perfectly_ordered() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn auc_hand_example() {
        let got = auc(&[0.9, 0.8, 0.3, 0.1], &[1, 0, 1, 0]).unwrap();
        assert_eq!(got, 0.75);
    }

    #[test]
    fn auc_ties_get_half_credit() {
        assert_eq!(auc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
    }

    proptest! {
        /// AUC is invariant under strictly monotone transforms of the scores.
        #[test]
        fn auc_monotone_invariant(
            scores in proptest::collection::vec(-10.0f64..10.0, 8..40),
            scale in 0.1f64..4.0,
            shift in -5.0f64..5.0,
        ) {
            let labels: Vec<u8> = scores.iter().enumerate().map(|(i, s)| u8::from(*s + (i as f64 * 0.37).sin() > 0.0)).collect();
            let n_pos: usize = labels.iter().map(|&l| usize::from(l)).sum();
            prop_assume!(n_pos > 0 && n_pos < labels.len());
            let base = auc(&scores, &labels).unwrap();
            // exp is strictly monotone; so is scale * x + shift for scale > 0.
            let t1: Vec<f64> = scores.iter().map(|&s| (s * 0.2).exp()).collect();
            let t2: Vec<f64> = scores.iter().map(|&s| scale * s + shift).collect();
            prop_assert!((auc(&t1, &labels).unwrap() - base).abs() < 1e-12);
            prop_assert!((auc(&t2, &labels).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn ne_of_mean_is_one_on_random_labels(labels in proptest::collection::vec(0u8..2, 4..60)) {
            let n_pos: usize = labels.iter().map(|&l| usize::from(l)).sum();
            prop_assume!(n_pos > 0 && n_pos < labels.len());
            let mean = n_pos as f64 / labels.len() as f64;
            let preds = vec![mean; labels.len()];
            prop_assert!((ne(&preds, &labels).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
