//! Rank-based AUC.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("AUC undefined: fewer than two classes present")]
    TooFewClasses,
    #[error("{scores} score rows but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("ask-rate undefined: no acquisitions")]
    NoAcquisitions,
}

/// Midranks (1-based) of `values`; tied values share the mean of their ranks.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i..j hold ranks i+1..=j.
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Mann-Whitney AUC of `scores` for `positive` vs the rest. `None` when
/// either side is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let (p, n) = (n_pos as f64, n_neg as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Some(u / (p * n))
}

/// One-vs-rest AUC averaged without weights over the classes present in
/// `labels`. `scores[i][c]` is the score of instance `i` for class `c`.
pub fn auc_ovr(scores: &[Vec<f64>], labels: &[usize]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let classes = scores.first().map_or(0, Vec::len);
    let mut total = 0.0;
    let mut present = 0usize;
    for c in 0..classes {
        let positive: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let column: Vec<f64> = scores.iter().map(|row| row[c]).collect();
        if let Some(auc) = binary_auc(&column, &positive) {
            total += auc;
            present += 1;
        }
    }
    if present < 2 {
        return Err(MetricError::TooFewClasses);
    }
    Ok(total / present as f64)
}
