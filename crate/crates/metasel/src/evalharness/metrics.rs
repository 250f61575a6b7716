//! Evaluation metrics: ROC AUC (rank-based Mann-Whitney), accuracy at a
//! fixed 0.5 threshold, product-moment correlation, and the per-sample
//! oracle selection.

use crate::error::{Error, Result};

/// Area under the ROC curve via the Mann-Whitney statistic with average
/// ranks for ties: `(wins + 0.5 * ties) / (n_pos * n_neg)`, computed in
/// O(n log n). Exact-equal scores share an average rank, so the result is
/// bit-identical to the all-pairs definition.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Metric("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric(format!(
            "AUC needs both classes (pos {n_pos}, neg {n_neg})"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j share the average rank
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            if labels[k] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }

    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Fraction of samples with `(score > 0.5) == label`; a score of exactly
/// 0.5 counts as class 0.
pub fn accuracy(scores: &[f64], labels: &[u8]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(s, &l)| u8::from(**s > 0.5) == l)
        .count();
    correct as f64 / scores.len() as f64
}

/// Pearson product-moment correlation.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Metric("correlation needs >= 2 paired values".into()));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - mean_a) * (y - mean_b);
        var_a += (x - mean_a).powi(2);
        var_b += (y - mean_b).powi(2);
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::Metric("correlation undefined for zero variance".into()));
    }
    Ok(cov / (var_a.sqrt() * var_b.sqrt()))
}

/// Evaluation-only upper bound: return the probability whose classification
/// error is smaller; ties go to the shape classifier's output.
pub fn oracle_select(p_shape: f64, p_texture: f64, label: u8) -> f64 {
    let e_shape = (p_shape - label as f64).abs();
    let e_texture = (p_texture - label as f64).abs();
    if e_shape <= e_texture {
        p_shape
    } else {
        p_texture
    }
}

/// All-pairs AUC oracle: O(n^2), kept for equivalence tests.
#[cfg(test)]
pub(crate) fn auc_brute_force(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0f64;
    let mut total = 0.0f64;
    for (i, (&si, &li)) in scores.iter().zip(labels).enumerate() {
        if li != 1 {
            continue;
        }
        for (j, (&sj, &lj)) in scores.iter().zip(labels).enumerate() {
            if i == j || lj != 0 {
                continue;
            }
            total += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / total
}
