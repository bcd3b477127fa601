use crate::error::{contract_err, shape_err, Result};

/// Probability that a random positive outranks a random negative, ties
/// counting one half.
pub fn auc_score(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(shape_err("auc_score", format!("{} scores for {} labels", scores.len(), positive.len())));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(contract_err("auc_score", "both classes must be present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average 1-based ranks over tie groups.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// F1 of each class appearing in `labels` or `predictions`, ascending by class.
pub fn per_class_f1(predictions: &[usize], labels: &[usize]) -> Result<Vec<(usize, f64)>> {
    if predictions.len() != labels.len() {
        return Err(shape_err("f1_score", format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    let mut classes: Vec<usize> = predictions.iter().chain(labels).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    Ok(classes
        .into_iter()
        .map(|c| {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fn_ = 0usize;
            for (&p, &l) in predictions.iter().zip(labels) {
                match (p == c, l == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            let denom = 2 * tp + fp + fn_;
            (c, if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 })
        })
        .collect())
}

/// Macro F1 over the classes present in either sequence.
pub fn f1_score(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    let per = per_class_f1(predictions, labels)?;
    if per.is_empty() {
        return Ok(0.0);
    }
    Ok(per.iter().map(|(_, f)| f).sum::<f64>() / per.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc_score(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc_score(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert_eq!(auc_score(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
        assert!(auc_score(&[0.1, 0.2], &[true, true]).is_err());
        assert!(auc_score(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap(), 1.0);
        // class 1: TP = 1, FP = 1, FN = 1
        let per = per_class_f1(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap();
        assert_eq!(per[1], (1, 0.5));
        assert!(f1_score(&[0], &[0, 1]).is_err());
    }
}
