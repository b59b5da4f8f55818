use serde::{Deserialize, Serialize};

use super::Mode;
use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-feature normalization over every valid node in the batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub name: String,
    pub features: usize,
    pub eps: f64,
    /// Weight of the old running statistic in each update.
    pub momentum: f64,
}

/// New running statistics produced by a training-mode pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BnUpdate {
    pub mean_name: String,
    pub var_name: String,
    pub mean: Tensor,
    pub var: Tensor,
}

impl BnUpdate {
    pub fn apply(&self, store: &mut ParamStore) -> Result<()> {
        store.set_value(&self.mean_name, self.mean.clone())?;
        store.set_value(&self.var_name, self.var.clone())
    }
}

impl BatchNorm {
    pub fn new(name: impl Into<String>, features: usize) -> Self {
        Self {
            name: name.into(),
            features,
            eps: 1e-5,
            momentum: 0.9,
        }
    }

    pub fn scale_name(&self) -> String {
        format!("{}.scale", self.name)
    }

    pub fn shift_name(&self) -> String {
        format!("{}.shift", self.name)
    }

    pub fn running_mean_name(&self) -> String {
        format!("{}.running_mean", self.name)
    }

    pub fn running_var_name(&self) -> String {
        format!("{}.running_var", self.name)
    }

    pub fn init_params(&self, store: &mut ParamStore) -> Result<()> {
        store.insert(self.scale_name(), Tensor::filled(1, self.features, 1.0))?;
        store.insert(self.shift_name(), Tensor::zeros(1, self.features))?;
        store.insert(self.running_mean_name(), Tensor::zeros(1, self.features))?;
        store.insert(self.running_var_name(), Tensor::filled(1, self.features, 1.0))?;
        store.set_trainable(&self.running_mean_name(), false)?;
        store.set_trainable(&self.running_var_name(), false)?;
        Ok(())
    }
}

/// Normalizes `x` (any number of `n_b × f` parts) per feature. Training mode
/// uses the statistics of the current batch and returns the running-stat
/// update; evaluation mode uses the stored running statistics.
pub fn batch_norm_forward(
    tape: &mut Tape,
    store: &ParamStore,
    layer: &BatchNorm,
    x: Var,
    mode: Mode,
) -> Result<(Var, Option<BnUpdate>)> {
    let rows: usize = tape.value(x).iter().map(|p| p.rows()).sum();
    let scale = tape.param(store, &layer.scale_name())?;
    let shift = tape.param(store, &layer.shift_name())?;
    let (normalized, update) = match mode {
        Mode::Train => {
            if rows < 2 {
                return Err(Error::structural(format!(
                    "batch norm `{}` needs at least two valid nodes in training mode, got {rows}",
                    layer.name
                )));
            }
            let inv_count = 1.0 / rows as f64;
            let sums = tape.sum_cols(x)?;
            let sums = tape.sum_parts(sums)?;
            let mean = tape.scale(sums, inv_count)?;
            let centered = tape.sub(x, mean)?;
            let sq = tape.mul(centered, centered)?;
            let sq = tape.sum_cols(sq)?;
            let sq = tape.sum_parts(sq)?;
            let var = tape.scale(sq, inv_count)?;
            let eps = tape.constant(Tensor::scalar(layer.eps))?;
            let var_eps = tape.add(var, eps)?;
            let inv_std = tape.inv_sqrt(var_eps)?;
            let normalized = tape.mul(centered, inv_std)?;

            let m = layer.momentum;
            let blend = |old: &Tensor, new: &Tensor| {
                old.zip_map(new, |o, n| m * o + (1.0 - m) * n)
            };
            let update = BnUpdate {
                mean_name: layer.running_mean_name(),
                var_name: layer.running_var_name(),
                mean: blend(store.value(&layer.running_mean_name())?, tape.single(mean))?,
                var: blend(store.value(&layer.running_var_name())?, tape.single(var))?,
            };
            (normalized, Some(update))
        }
        Mode::Eval => {
            let mean = tape.constant(store.value(&layer.running_mean_name())?.clone())?;
            let var = store.value(&layer.running_var_name())?;
            let inv_std = tape.constant(var.map(|v| 1.0 / (v + layer.eps).sqrt()))?;
            let centered = tape.sub(x, mean)?;
            (tape.mul(centered, inv_std)?, None)
        }
    };
    let scaled = tape.mul(normalized, scale)?;
    Ok((tape.add(scaled, shift)?, update))
}
