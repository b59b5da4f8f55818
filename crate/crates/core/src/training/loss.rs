use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::TaskType;

/// Per-entry weights `mask · w_t`, their total, and labels with masked
/// entries replaced by 0 so that whatever sits under the mask never reaches
/// the arithmetic.
fn prepare(pred_shape: [usize; 2], labels: &Tensor, mask: &Tensor, weights: &[f64]) -> Result<(Tensor, f64, Tensor)> {
    if labels.shape() != pred_shape || mask.shape() != pred_shape {
        return Err(Error::Shape {
            op: "loss",
            lhs: pred_shape,
            rhs: if labels.shape() != pred_shape { labels.shape() } else { mask.shape() },
        });
    }
    if weights.len() != pred_shape[1] {
        return Err(Error::parameter(
            "task_weights",
            format!("{} weights for {} tasks", weights.len(), pred_shape[1]),
        ));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::parameter("task_weights", "weights must be finite and non-negative"));
    }
    let coeff = Tensor::from_fn(pred_shape[0], pred_shape[1], |b, t| {
        if mask[(b, t)] != 0.0 {
            weights[t]
        } else {
            0.0
        }
    });
    let total = coeff.sum();
    if total <= 0.0 {
        return Err(Error::NoSupervisedSignal);
    }
    let clean = Tensor::from_fn(pred_shape[0], pred_shape[1], |b, t| {
        if mask[(b, t)] != 0.0 {
            labels[(b, t)]
        } else {
            0.0
        }
    });
    Ok((coeff, total, clean))
}

/// `Σ mask·w·(pred − y)² / Σ mask·w`.
pub fn weighted_l2_loss(tape: &mut Tape, pred: Var, labels: &Tensor, mask: &Tensor, weights: &[f64]) -> Result<Var> {
    let (coeff, total, clean) = prepare(tape.single(pred).shape(), labels, mask, weights)?;
    let y = tape.constant(clean)?;
    let c = tape.constant(coeff)?;
    let diff = tape.sub(pred, y)?;
    let sq = tape.mul(diff, diff)?;
    let weighted = tape.mul(sq, c)?;
    let sum = tape.sum_all(weighted)?;
    tape.scale(sum, 1.0 / total)
}

/// Weighted mean binary cross-entropy on logits, via
/// `−log σ(z) = softplus(−z)` and `−log(1 − σ(z)) = softplus(z)`.
pub fn masked_logistic_loss(
    tape: &mut Tape,
    logits: Var,
    labels: &Tensor,
    mask: &Tensor,
    weights: &[f64],
) -> Result<Var> {
    let (coeff, total, clean) = prepare(tape.single(logits).shape(), labels, mask, weights)?;
    for b in 0..clean.rows() {
        for t in 0..clean.cols() {
            let y = clean[(b, t)];
            if mask[(b, t)] != 0.0 && y != 0.0 && y != 1.0 {
                return Err(Error::data(
                    Some(format!("batch row {b}, task {t}")),
                    format!("classification label {y} is not 0 or 1"),
                ));
            }
        }
    }
    let sign = tape.constant(clean.map(|y| 1.0 - 2.0 * y))?;
    let c = tape.constant(coeff)?;
    let signed = tape.mul(logits, sign)?;
    let nll = tape.softplus(signed)?;
    let weighted = tape.mul(nll, c)?;
    let sum = tape.sum_all(weighted)?;
    tape.scale(sum, 1.0 / total)
}

/// Loss for the given task type.
pub fn task_loss(
    tape: &mut Tape,
    task: TaskType,
    scores: Var,
    labels: &Tensor,
    mask: &Tensor,
    weights: &[f64],
) -> Result<Var> {
    match task {
        TaskType::Regression => weighted_l2_loss(tape, scores, labels, mask, weights),
        TaskType::Classification => masked_logistic_loss(tape, scores, labels, mask, weights),
    }
}

/// Loss value for fixed scores, outside any training tape.
pub fn loss_value(task: TaskType, scores: &Tensor, labels: &Tensor, mask: &Tensor, weights: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let s = tape.constant(scores.clone())?;
    let l = task_loss(&mut tape, task, s, labels, mask, weights)?;
    Ok(tape.single(l).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamStore;

    fn l2(pred: &Tensor, y: &Tensor, m: &Tensor) -> Result<f64> {
        loss_value(TaskType::Regression, pred, y, m, &vec![1.0; pred.cols()])
    }

    #[test]
    fn exact_predictions_give_zero() {
        let p = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, -4.0]]);
        assert_eq!(l2(&p, &p, &Tensor::filled(2, 2, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn single_unmasked_residual() {
        let p = Tensor::from_rows(&[vec![3.0, 100.0]]);
        let y = Tensor::from_rows(&[vec![1.0, 0.0]]);
        let m = Tensor::from_rows(&[vec![1.0, 0.0]]);
        assert_eq!(l2(&p, &y, &m).unwrap(), 4.0);
    }

    #[test]
    fn weights_scale_each_task() {
        let p = Tensor::from_rows(&[vec![1.0, 1.0]]);
        let y = Tensor::from_rows(&[vec![0.0, 3.0]]);
        let m = Tensor::filled(1, 2, 1.0);
        let v = loss_value(TaskType::Regression, &p, &y, &m, &[3.0, 1.0]).unwrap();
        assert!((v - (3.0 * 1.0 + 4.0) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn masked_prediction_gets_exactly_zero_gradient() {
        let mut store = ParamStore::new();
        store.insert("p", Tensor::from_rows(&[vec![0.5, 9.0], vec![-1.0, 2.0]])).unwrap();
        let y = Tensor::from_rows(&[vec![1.0, f64::NAN], vec![0.0, 1.0]]);
        let m = Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]);
        for task in [TaskType::Regression, TaskType::Classification] {
            store.zero_grads();
            let mut tape = Tape::new();
            let p = tape.param(&store, "p").unwrap();
            let l = task_loss(&mut tape, task, p, &y, &m, &[1.0, 1.0]).unwrap();
            tape.backward(l, &mut store).unwrap();
            let g = store.grad("p").unwrap();
            assert_eq!(g[(0, 1)], 0.0);
            assert!(g[(0, 0)] != 0.0);
        }
    }

    #[test]
    fn all_masked_has_no_signal() {
        let p = Tensor::zeros(2, 1);
        assert_eq!(l2(&p, &p, &Tensor::zeros(2, 1)), Err(Error::NoSupervisedSignal));
        let zero_weight = loss_value(TaskType::Regression, &p, &p, &Tensor::filled(2, 1, 1.0), &[0.0]);
        assert_eq!(zero_weight, Err(Error::NoSupervisedSignal));
    }

    #[test]
    fn logistic_examples() {
        let one = Tensor::scalar(1.0);
        let m = Tensor::scalar(1.0);
        let v = loss_value(TaskType::Classification, &Tensor::scalar(0.0), &one, &m, &[1.0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        let v = loss_value(TaskType::Classification, &Tensor::scalar(50.0), &one, &m, &[1.0]).unwrap();
        assert!((0.0..=1e-20).contains(&v));
        for z in [500.0, -500.0] {
            for y in [0.0, 1.0] {
                let v = loss_value(TaskType::Classification, &Tensor::scalar(z), &Tensor::scalar(y), &m, &[1.0]).unwrap();
                assert!(v.is_finite());
            }
        }
        let v = loss_value(TaskType::Classification, &Tensor::scalar(-500.0), &one, &m, &[1.0]).unwrap();
        assert!((v - 500.0).abs() < 1e-9);
    }

    #[test]
    fn masked_label_flip_is_invisible() {
        let z = Tensor::from_rows(&[vec![0.3, -1.2], vec![2.0, 0.1]]);
        let m = Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]);
        let a = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let b = Tensor::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        let la = loss_value(TaskType::Classification, &z, &a, &m, &[1.0, 1.0]).unwrap();
        let lb = loss_value(TaskType::Classification, &z, &b, &m, &[1.0, 1.0]).unwrap();
        assert_eq!(la.to_bits(), lb.to_bits());
    }

    #[test]
    fn non_binary_label_is_a_data_error() {
        let r = loss_value(
            TaskType::Classification,
            &Tensor::scalar(0.0),
            &Tensor::scalar(0.5),
            &Tensor::scalar(1.0),
            &[1.0],
        );
        assert!(matches!(r, Err(Error::Data { .. })));
        // Masked entries are not inspected.
        let r = loss_value(
            TaskType::Classification,
            &Tensor::from_rows(&[vec![0.0, 0.0]]),
            &Tensor::from_rows(&[vec![1.0, 7.0]]),
            &Tensor::from_rows(&[vec![1.0, 0.0]]),
            &[1.0, 1.0],
        );
        assert!(r.is_ok());
    }
}
