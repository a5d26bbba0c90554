use super::EvalError;

/// Area under the ROC curve via the Mann-Whitney U statistic.
///
/// The probability that a randomly chosen positive scores above a randomly
/// chosen negative, with ties credited one half. Runs in O(n log n) using
/// mid-ranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore);
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass {
            positives,
            negatives,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of (doubled) mid-ranks of the positives; doubling keeps every
    // term an integer so the sum is exact.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j share the mid-rank (i + 1 + j) / 2.
        let twice_mid = (i + 1 + j) as u64;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count() as u64;
        twice_rank_sum += twice_mid * pos_in_group;
        i = j;
    }
    let p = positives as u64;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2.0 * positives as f64 * negatives as f64))
}
