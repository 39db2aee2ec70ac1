//! Ranking and calibration metrics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stca::bce_loss;

/// Evaluation summary: AUC (higher is better), NLL (lower is better).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub auc: f64,
    pub nll: f64,
    pub n: usize,
}

/// Area under the ROC curve via the rank statistic, ties counted half.
///
/// Needs at least one positive and one negative label.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            op: "auc",
            lhs: (scores.len(), 1),
            rhs: (labels.len(), 1),
        });
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric("auc needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // Average ranks over tie groups, 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    let n = negatives as f64;
    let u_stat = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u_stat / (p * n))
}

/// Mean clamped binary cross-entropy over the set.
pub fn nll(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::UndefinedMetric("nll needs aligned nonempty inputs"));
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| bce_loss(s, y))
        .sum();
    Ok(total / scores.len() as f64)
}

pub fn metrics(scores: &[f64], labels: &[u8]) -> Result<Metrics> {
    Ok(Metrics {
        auc: auc(scores, labels)?,
        nll: nll(scores, labels)?,
        n: scores.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_separated_scores() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        let labels = [0, 0, 1, 1];
        assert_eq!(auc(&scores, &labels).unwrap(), 1.0);
        let flipped = [1, 1, 0, 0];
        assert_eq!(auc(&scores, &flipped).unwrap(), 0.0);
    }

    #[test]
    fn all_ties_give_half() {
        let scores = [0.5; 6];
        let labels = [0, 1, 0, 1, 0, 1];
        assert_eq!(auc(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn pairwise_oracle_case() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [0, 0, 1, 1];
        assert_eq!(auc(&scores, &labels).unwrap(), 0.75);
    }

    #[test]
    fn matches_pairwise_comparison_oracle_on_random_inputs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for _ in 0..30 {
            let n = rng.random_range(4..40);
            let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..10) as f64) / 10.0).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
            if labels.iter().all(|&y| y == 1) || labels.iter().all(|&y| y == 0) {
                continue;
            }
            // Independent O(n^2) comparison count.
            let mut wins = 0.0;
            let mut pairs = 0.0;
            for (i, &yi) in labels.iter().enumerate() {
                if yi != 1 {
                    continue;
                }
                for (j, &yj) in labels.iter().enumerate() {
                    if yj != 0 {
                        continue;
                    }
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
            let expect = wins / pairs;
            let got = auc(&scores, &labels).unwrap();
            assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transforms() {
        let scores = [0.05, 0.2, 0.33, 0.41, 0.77, 0.9];
        let labels = [0, 1, 0, 1, 1, 0];
        let base = auc(&scores, &labels).unwrap();
        let logit: Vec<f64> = scores.iter().map(|&s| (s / (1.0 - s)).ln()).collect();
        let scaled: Vec<f64> = scores.iter().map(|&s| 100.0 * s + 3.0).collect();
        assert_eq!(auc(&logit, &labels).unwrap(), base);
        assert_eq!(auc(&scaled, &labels).unwrap(), base);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(
            auc(&[0.1, 0.9], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn nll_is_mean_bce() {
        let scores = [0.9, 0.1, 0.5];
        let labels = [1, 0, 1];
        let expect = (-(0.9f64).ln() - (0.9f64).ln() - (0.5f64).ln()) / 3.0;
        assert!((nll(&scores, &labels).unwrap() - expect).abs() < 1e-12);
    }
}
