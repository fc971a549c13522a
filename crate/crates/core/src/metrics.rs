//! Ranking metrics for binary and one-vs-rest multiclass scoring.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    Length { scores: usize, labels: usize },
    #[error("metric undefined: only one class present")]
    SingleClass,
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("score matrix has {got} columns, expected {expected}")]
    Columns { expected: usize, got: usize },
}

fn check<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<(usize, usize), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::Length { scores: scores.len(), labels: labels.len() });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass);
    }
    Ok((pos, neg))
}

/// Area under the ROC curve via the rank-sum statistic. Tied scores get
/// their average rank, which counts each tied positive/negative pair as 1/2.
pub fn roc_auc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<f64, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].partial_cmp(&scores[j]).expect("finite"));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: mean of the precision at each positive's position in
/// the descending-score order. Ties keep the input order.
pub fn average_precision<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<f64, MetricError> {
    let (pos, _) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).expect("finite"));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        if labels[k] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}

fn macro_ovr<T: Scalar>(
    probs: &[Vec<T>],
    labels: &[usize],
    k: usize,
    metric: fn(&[T], &[bool]) -> Result<f64, MetricError>,
) -> Result<f64, MetricError> {
    if probs.len() != labels.len() {
        return Err(MetricError::Length { scores: probs.len(), labels: labels.len() });
    }
    if let Some(row) = probs.iter().find(|r| r.len() != k) {
        return Err(MetricError::Columns { expected: k, got: row.len() });
    }
    let mut total = 0.0;
    let mut used = 0;
    for c in 0..k {
        let truth: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let present = truth.iter().filter(|&&t| t).count();
        // A class absent from the split (or covering all of it) has no
        // one-vs-rest curve; it is left out of the average.
        if present == 0 || present == truth.len() {
            continue;
        }
        let scores: Vec<T> = probs.iter().map(|r| r[c]).collect();
        total += metric(&scores, &truth)?;
        used += 1;
    }
    if used == 0 {
        return Err(MetricError::SingleClass);
    }
    Ok(total / used as f64)
}

/// Unweighted mean of one-vs-rest ROC-AUC over the classes present.
pub fn macro_roc_auc<T: Scalar>(probs: &[Vec<T>], labels: &[usize], k: usize) -> Result<f64, MetricError> {
    macro_ovr(probs, labels, k, roc_auc::<T>)
}

pub fn macro_average_precision<T: Scalar>(probs: &[Vec<T>], labels: &[usize], k: usize) -> Result<f64, MetricError> {
    macro_ovr(probs, labels, k, average_precision::<T>)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Fraction of positive/negative pairs ranked correctly, ties as 1/2.
    fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut good = 0.0;
        let mut total = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    total += 1.0;
                    if scores[i] > scores[j] {
                        good += 1.0;
                    } else if scores[i] == scores[j] {
                        good += 0.5;
                    }
                }
            }
        }
        good / total
    }

    #[test]
    fn roc_examples() {
        let l = [false, false, true, true];
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &l).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.3, 0.4], &l).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.4, 0.3, 0.2, 0.1], &l).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5; 4], &l).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1f32, 0.4, 0.35, 0.8], &l).unwrap(), 0.75);
    }

    #[test]
    fn ap_examples() {
        // Descending: 0.8(+) 0.4(-) 0.35(+) 0.1(-) → (1 + 2/3) / 2
        let ap = average_precision(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
    }

    /// For each positive: positives ranked at or above it over everything
    /// ranked at or above it, with rank order (score desc, index asc)
    /// decided pairwise.
    fn pairwise_ap(scores: &[f64], labels: &[bool]) -> f64 {
        let above = |j: usize, i: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
        let mut sum = 0.0;
        let mut pos = 0.0;
        for i in (0..scores.len()).filter(|&i| labels[i]) {
            let n_above = (0..scores.len()).filter(|&j| above(j, i)).count() as f64;
            let pos_above = (0..scores.len()).filter(|&j| labels[j] && above(j, i)).count() as f64;
            sum += pos_above / n_above;
            pos += 1.0;
        }
        sum / pos
    }

    #[test]
    fn exhaustive_small_datasets_match_oracles() {
        // Every labelling and every score vector over a 3-level grid (ties
        // included) for n ≤ 6; larger n are covered by the acceptance suite.
        for n in 2..=6usize {
            let n_scores = 3usize.pow(n as u32);
            for lab in 1..(1u32 << n) - 1 {
                let labels: Vec<bool> = (0..n).map(|i| lab >> i & 1 == 1).collect();
                for code in 0..n_scores {
                    let scores: Vec<f64> = (0..n).map(|i| ((code / 3usize.pow(i as u32)) % 3) as f64).collect();
                    assert_eq!(roc_auc(&scores, &labels).unwrap(), pairwise_auc(&scores, &labels));
                    let ap = average_precision(&scores, &labels).unwrap();
                    assert!((ap - pairwise_ap(&scores, &labels)).abs() < 1e-12);
                }
            }
        }
    }

    fn mc_chance_ap(n: usize, n_pos: usize, trials: usize, seed: u64) -> f64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
        let mut total = 0.0;
        for _ in 0..trials {
            let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            total += average_precision(&scores, &labels).unwrap();
        }
        total / trials as f64
    }

    #[test]
    fn chance_level_average_precision() {
        // Large n: the expectation approaches the positive rate.
        let mean = mc_chance_ap(1000, 300, 10_000, 8);
        assert!((mean - 0.3).abs() < 0.02, "{mean}");
        // Small n: compare with the exact expectation. A positive at rank r
        // has 1 + Hypergeom(r-1; N-1, P-1) positives at or above it.
        let (n, p) = (50.0f64, 15.0f64);
        let h_n: f64 = (1..=50).map(|r| 1.0 / r as f64).sum();
        let exact = (p - 1.0) / (n - 1.0) + (n - p) / (n - 1.0) * h_n / n;
        let mean = mc_chance_ap(50, 15, 10_000, 9);
        assert!((mean - exact).abs() < 0.005, "{mean} vs {exact}");
    }

    #[test]
    fn macro_is_mean_of_per_class_calls() {
        let probs = vec![
            vec![0.6, 0.3, 0.1],
            vec![0.2, 0.5, 0.3],
            vec![0.1, 0.2, 0.7],
            vec![0.4, 0.4, 0.2],
            vec![0.3, 0.3, 0.4],
            vec![0.5, 0.1, 0.4],
        ];
        let labels = [0, 1, 2, 1, 2, 0];
        let hand: f64 = (0..3)
            .map(|c| {
                let s: Vec<f64> = probs.iter().map(|r| r[c]).collect();
                let t: Vec<bool> = labels.iter().map(|&l| l == c).collect();
                pairwise_auc(&s, &t)
            })
            .sum::<f64>()
            / 3.0;
        assert!((macro_roc_auc(&probs, &labels, 3).unwrap() - hand).abs() < 1e-12);
        let perfect = vec![vec![0.9, 0.05, 0.05], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8]];
        assert_eq!(macro_roc_auc(&perfect, &[0, 1, 2], 3).unwrap(), 1.0);
        assert_eq!(macro_average_precision(&perfect, &[0, 1, 2], 3).unwrap(), 1.0);
    }

    #[test]
    fn uniform_scores_give_chance_macro_auc() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let n = 3000;
        let probs: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        assert!((macro_roc_auc(&probs, &labels, 3).unwrap() - 0.5).abs() < 0.02);
    }

    #[test]
    fn undefined_inputs_are_errors() {
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]), Err(MetricError::SingleClass));
        assert_eq!(roc_auc(&[0.1, f64::NAN], &[true, false]), Err(MetricError::NonFinite(1)));
        assert!(matches!(average_precision(&[0.1], &[true, false]), Err(MetricError::Length { .. })));
    }

    #[test]
    fn macro_skips_absent_classes() {
        let probs = vec![vec![0.7, 0.2, 0.1], vec![0.2, 0.7, 0.1], vec![0.6, 0.3, 0.1], vec![0.1, 0.8, 0.1]];
        let labels = [0, 1, 0, 1];
        assert_eq!(macro_roc_auc(&probs, &labels, 3).unwrap(), 1.0);
        assert!(macro_roc_auc(&probs, &[0, 0, 0, 0], 3).is_err());
    }

    #[test]
    fn rank_sum_matches_pairwise_oracle_on_ties() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let n = rng.random_range(2..40);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64 / 4.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            labels[0] = true;
            labels[1] = false;
            let a = roc_auc(&scores, &labels).unwrap();
            assert!((a - pairwise_auc(&scores, &labels)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn auc_is_a_bounded_rank_statistic(
            raw in prop::collection::vec((-1e3f64..1e3, any::<bool>()), 2..60)
        ) {
            let mut scores: Vec<f64> = raw.iter().map(|r| r.0).collect();
            let mut labels: Vec<bool> = raw.iter().map(|r| r.1).collect();
            labels[0] = true;
            labels[1] = false;
            let a = roc_auc(&scores, &labels).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((a - pairwise_auc(&scores, &labels)).abs() < 1e-9);
            // Invariant under strictly increasing transforms.
            let t: Vec<f64> = scores.iter().map(|s| (s / 100.0).exp() * 3.0 + 1.0).collect();
            prop_assert!((roc_auc(&t, &labels).unwrap() - a).abs() < 1e-9);
            // Complementing the labels mirrors the curve.
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            prop_assert!((roc_auc(&scores, &flipped).unwrap() - (1.0 - a)).abs() < 1e-9);
            let ap = average_precision(&scores, &labels).unwrap();
            prop_assert!(ap > 0.0 && ap <= 1.0);
            for s in scores.iter_mut() { *s = -*s; }
            prop_assert!((roc_auc(&scores, &labels).unwrap() - (1.0 - a)).abs() < 1e-9);
        }
    }
}
