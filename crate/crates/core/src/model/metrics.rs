use super::ModelError;

/// Area under the ROC curve: the probability that a target score exceeds a
/// nontarget score, ties counting one half. Computed from average ranks.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, ModelError> {
    if scores.len() != labels.len() {
        return Err(ModelError::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let n1 = labels.iter().filter(|&&l| l == 1).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(ModelError::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share their average.
        let avg = (i + 1 + j) as f64 / 2.0;
        let targets = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += avg * targets as f64;
        i = j;
    }
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n1 as f64 * n0 as f64))
}
