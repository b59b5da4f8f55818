//! Central finite-difference checks for tape gradients.

use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// Outcome of checking one parameter tensor.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    pub analytic: Tensor,
    pub numeric: Tensor,
    /// `max |analytic − numeric| / max(‖analytic‖∞, ‖numeric‖∞, floor)`.
    pub rel_error: f64,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.rel_error <= tol
    }
}

/// Gradient magnitudes below this are compared absolutely.
pub const SCALE_FLOOR: f64 = 1e-7;

pub fn relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let scale = analytic.max_abs().max(numeric.max_abs()).max(SCALE_FLOOR);
    analytic.max_abs_diff(numeric) / scale
}

/// Compares reverse-mode gradients of the scalar built by `loss` against
/// central differences with the given `step`, for each parameter in `names`.
///
/// `loss` must be a pure function of the store's values.
pub fn check_gradients<F>(store: &ParamStore, names: &[&str], step: f64, loss: F) -> Result<Vec<GradCheck>>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut work = store.clone();
    work.zero_grads();
    let mut tape = Tape::new();
    let out = loss(&mut tape, &work)?;
    tape.backward(out, &mut work)?;

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let v = loss(&mut t, s)?;
        Ok(t.single(v).item())
    };

    let mut reports = Vec::with_capacity(names.len());
    for &name in names {
        let analytic = work.grad(name)?;
        let base = store.value(name)?.clone();
        let mut numeric = Tensor::zeros(base.rows(), base.cols());
        let mut probe = store.clone();
        for e in 0..base.len() {
            let mut plus = base.clone();
            plus.data_mut()[e] += step;
            probe.set_value(name, plus)?;
            let fp = eval(&probe)?;
            let mut minus = base.clone();
            minus.data_mut()[e] -= step;
            probe.set_value(name, minus)?;
            let fm = eval(&probe)?;
            numeric.data_mut()[e] = (fp - fm) / (2.0 * step);
        }
        let rel_error = relative_error(&analytic, &numeric);
        reports.push(GradCheck {
            name: name.to_string(),
            analytic,
            numeric,
            rel_error,
        });
    }
    Ok(reports)
}
