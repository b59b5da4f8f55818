use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A per-task metric and its unweighted mean over the tasks that could be
/// evaluated. Tasks without enough labels are `None` and listed in
/// `excluded`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub per_task: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub excluded: Vec<usize>,
}

impl TaskMetrics {
    fn from_per_task(per_task: Vec<Option<f64>>) -> Self {
        let excluded = per_task
            .iter()
            .enumerate()
            .filter_map(|(t, v)| v.is_none().then_some(t))
            .collect();
        let values: Vec<f64> = per_task.iter().flatten().copied().collect();
        let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
        Self {
            per_task,
            mean,
            excluded,
        }
    }
}

fn check_shapes(pred: &Tensor, labels: &Tensor, mask: &Tensor) -> Result<()> {
    for other in [labels, mask] {
        if other.shape() != pred.shape() {
            return Err(Error::Shape {
                op: "metric",
                lhs: pred.shape(),
                rhs: other.shape(),
            });
        }
    }
    Ok(())
}

/// Masked root-mean-square error per task (columns).
pub fn rmse(pred: &Tensor, labels: &Tensor, mask: &Tensor) -> Result<TaskMetrics> {
    check_shapes(pred, labels, mask)?;
    let per_task = (0..pred.cols())
        .map(|t| {
            let (sum, count) = (0..pred.rows())
                .filter(|&b| mask[(b, t)] != 0.0)
                .fold((0.0, 0usize), |(s, c), b| {
                    let r = pred[(b, t)] - labels[(b, t)];
                    (s + r * r, c + 1)
                });
            (count > 0).then(|| (sum / count as f64).sqrt())
        })
        .collect();
    Ok(TaskMetrics::from_per_task(per_task))
}

/// Masked ROC-AUC per task. Single-class tasks are excluded.
pub fn roc_auc(scores: &Tensor, labels: &Tensor, mask: &Tensor) -> Result<TaskMetrics> {
    check_shapes(scores, labels, mask)?;
    let mut per_task = Vec::with_capacity(scores.cols());
    for t in 0..scores.cols() {
        let mut s = Vec::new();
        let mut y = Vec::new();
        for b in (0..scores.rows()).filter(|&b| mask[(b, t)] != 0.0) {
            let label = labels[(b, t)];
            if label != 0.0 && label != 1.0 {
                return Err(Error::data(
                    Some(format!("row {b}, task {t}")),
                    format!("classification label {label} is not 0 or 1"),
                ));
            }
            s.push(scores[(b, t)]);
            y.push(label == 1.0);
        }
        per_task.push(auc(&s, &y)?);
    }
    Ok(TaskMetrics::from_per_task(per_task))
}

/// Probability that a random positive outranks a random negative, ties
/// counted as one half, from mid-ranks. Counts are kept doubled so the
/// result is an exact ratio of integers.
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<Option<f64>> {
    if scores.len() != positive.len() {
        return Err(Error::structural("scores and labels differ in length"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::numerical("roc_auc", "non-finite score"));
    }
    let n_pos = positive.iter().filter(|&&p| p).count() as u64;
    let n_neg = positive.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut doubled_rank_sum = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Positions i..j share the mid-rank (i + 1 + j) / 2.
        let pos_in_group = order[i..j].iter().filter(|&&k| positive[k]).count() as u64;
        doubled_rank_sum += pos_in_group * (i as u64 + 1 + j as u64);
        i = j;
    }
    let doubled_wins = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(Some(doubled_wins as f64 / (2 * n_pos * n_neg) as f64))
}

/// Pairwise reference: `O(P·N)` comparisons.
pub fn auc_brute_force(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(positive).filter(|(_, &p)| p).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(positive).filter(|(_, &p)| !p).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut doubled = 0u64;
    for p in &pos {
        for n in &neg {
            doubled += match p.partial_cmp(n) {
                Some(std::cmp::Ordering::Greater) => 2,
                Some(std::cmp::Ordering::Equal) => 1,
                _ => 0,
            };
        }
    }
    Some(doubled as f64 / (2 * pos.len() * neg.len()) as f64)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn rmse_examples() {
        let p = Tensor::column(&[1.0, 2.0]);
        let ones = Tensor::filled(2, 1, 1.0);
        assert_eq!(rmse(&p, &p, &ones).unwrap().mean, Some(0.0));
        let y = Tensor::column(&[4.0, -2.0]);
        let m = rmse(&p, &y, &ones).unwrap();
        assert!((m.per_task[0].unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rmse_flags_tasks_without_labels() {
        let p = Tensor::from_rows(&[vec![1.0, 0.0], vec![3.0, 5.0]]);
        let y = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
        let m = Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let r = rmse(&p, &y, &m).unwrap();
        assert_eq!(r.per_task[1], None);
        assert_eq!(r.excluded, vec![1]);
        assert_eq!(r.mean, r.per_task[0]);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), Some(1.0));
        assert_eq!(auc(&[0.5; 4], &[false, true, false, true]).unwrap(), Some(0.5));
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), Some(0.75));
        assert_eq!(auc(&[0.1, 0.4], &[true, true]).unwrap(), None);
    }

    #[test]
    fn single_class_task_is_excluded() {
        let s = Tensor::from_rows(&[vec![0.1, 0.3], vec![0.7, 0.2]]);
        let y = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]);
        let r = roc_auc(&s, &y, &Tensor::filled(2, 2, 1.0)).unwrap();
        assert_eq!(r.per_task, vec![Some(1.0), None]);
        assert_eq!(r.excluded, vec![1]);
        assert_eq!(r.mean, Some(1.0));
    }

    #[test]
    fn rank_statistic_equals_pairwise_count_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let n = rng.random_range(2..40);
            let levels = rng.random_range(1..8);
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / 4.0).collect();
            let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            assert_eq!(auc(&s, &y).unwrap(), auc_brute_force(&s, &y));
        }
    }
}
