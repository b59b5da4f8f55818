use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments for every parameter in a store, by id.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|p| Tensor::zeros(p.value.rows(), p.value.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update with learning rate `lr_t`, using the
/// gradients stored in `store`. Frozen parameters are left untouched. Any
/// non-finite gradient aborts before a single value changes.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, lr_t: f64) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::structural(format!(
            "optimizer state tracks {} parameters, store has {}",
            state.m.len(),
            store.len()
        )));
    }
    for p in store.iter().filter(|p| p.trainable) {
        if let Some(g) = &p.grad {
            if !g.is_finite() {
                return Err(Error::numerical(
                    format!("gradient of `{}`", p.name),
                    "non-finite value",
                ));
            }
        }
    }

    state.step += 1;
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (id, p) in store.iter_mut().enumerate() {
        if !p.trainable {
            continue;
        }
        let Some(g) = &p.grad else { continue };
        let m = state.m[id].data_mut();
        let v = state.v[id].data_mut();
        for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr_t * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with_grad(value: Tensor, grad: Tensor) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", value).unwrap();
        s.by_id_mut(0).grad = Some(grad);
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let start = Tensor::from_rows(&[vec![1.0, -2.0]]);
        let mut s = store_with_grad(start.clone(), Tensor::zeros(1, 2));
        let mut st = AdamState::new(&s);
        for _ in 0..3 {
            adam_step(&mut s, &mut st, 0.01).unwrap();
        }
        assert_eq!(s.value("w").unwrap(), &start);
    }

    #[test]
    fn first_step_moves_each_entry_by_the_learning_rate() {
        let mut s = store_with_grad(Tensor::zeros(1, 3), Tensor::row_vector(&[0.3, -7.0, 1e-2]));
        let mut st = AdamState::new(&s);
        adam_step(&mut s, &mut st, 0.005).unwrap();
        let w = s.value("w").unwrap();
        for (v, sign) in w.data().iter().zip([-1.0, 1.0, -1.0]) {
            assert!((v - sign * 0.005).abs() < 1e-8, "{v}");
        }
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn nan_gradient_names_the_parameter_and_changes_nothing() {
        let mut s = store_with_grad(Tensor::zeros(1, 2), Tensor::row_vector(&[1.0, f64::NAN]));
        let mut st = AdamState::new(&s);
        match adam_step(&mut s, &mut st, 0.1) {
            Err(Error::Numerical { context, .. }) => assert!(context.contains("`w`")),
            other => panic!("{other:?}"),
        }
        assert_eq!(s.value("w").unwrap(), &Tensor::zeros(1, 2));
        assert_eq!(st.step(), 0);
    }

    #[test]
    fn frozen_parameters_are_skipped() {
        let mut s = store_with_grad(Tensor::scalar(1.0), Tensor::scalar(5.0));
        s.set_trainable("w", false).unwrap();
        let mut st = AdamState::new(&s);
        adam_step(&mut s, &mut st, 0.1).unwrap();
        assert_eq!(s.value("w").unwrap().item(), 1.0);
    }
}
