use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, LambdaPolicy, LayerSpec, Model, SgcDefaults};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    #[default]
    Regression,
    Classification,
}

impl TaskType {
    /// Name of the per-task evaluation metric.
    pub fn metric_name(self) -> &'static str {
        match self {
            TaskType::Regression => "rmse",
            TaskType::Classification => "roc_auc",
        }
    }
}

/// Everything a training run depends on. Unknown keys are rejected so that a
/// misspelt override fails loudly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub decay_rate: f64,
    /// Optimizer iterations between learning-rate decays.
    pub decay_every: usize,
    pub max_epochs: usize,
    /// Default Chebyshev order for SGC-LL layers that do not set their own.
    #[serde(rename = "K")]
    pub order: usize,
    pub seed: u64,
    pub task_type: TaskType,
    pub architecture: Vec<LayerSpec>,
    pub mix_sigma: f64,
    pub gaussian_sigma: f64,
    pub threshold: f64,
    pub lambda_max: LambdaPolicy,
    /// Std of the noise on the near-identity `W_d` initialisation.
    pub init_noise: f64,
    pub folds: usize,
    /// Keeps every `W_d` at its initial value.
    pub freeze_metric: bool,
    /// Per-task loss weights; `None` weights every task by 1.
    pub task_weights: Option<Vec<f64>>,
    /// Share of the training data held out for validation curves.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            lr: 0.005,
            decay_rate: 0.9,
            decay_every: 50,
            max_epochs: 50,
            order: 3,
            seed: 0,
            task_type: TaskType::Regression,
            architecture: default_architecture(),
            mix_sigma: 1.0,
            gaussian_sigma: 1.0,
            threshold: 0.0,
            lambda_max: LambdaPolicy::CompositionBound,
            init_noise: 1e-3,
            folds: 5,
            freeze_metric: false,
            task_weights: None,
            validation_fraction: 0.1,
        }
    }
}

/// Two SGC-LL blocks with normalization and pooling, then a graph-level
/// dense layer.
pub fn default_architecture() -> Vec<LayerSpec> {
    vec![
        LayerSpec::sgc(32),
        LayerSpec::BatchNorm,
        LayerSpec::MaxPool,
        LayerSpec::sgc(32),
        LayerSpec::BatchNorm,
        LayerSpec::MaxPool,
        LayerSpec::Gather,
        LayerSpec::Dense {
            out_features: 64,
            activation: Some(Activation::Relu),
        },
    ]
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, why: &str| Err(Error::parameter(name, why));
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr", "must be positive and finite");
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return bad("decay_rate", "must lie in (0, 1]");
        }
        if self.decay_every == 0 {
            return bad("decay_every", "must be positive");
        }
        if self.order == 0 {
            return bad("K", "must be at least 1");
        }
        if self.folds < 2 {
            return bad("folds", "cross-validation needs at least 2 folds");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction", "must lie in [0, 1)");
        }
        if !(self.init_noise.is_finite() && self.init_noise >= 0.0) {
            return bad("init_noise", "must be finite and non-negative");
        }
        if let Some(w) = &self.task_weights {
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return bad("task_weights", "weights must be finite and non-negative");
            }
        }
        Ok(())
    }

    pub fn sgc_defaults(&self) -> SgcDefaults {
        SgcDefaults {
            order: self.order,
            mix_sigma: self.mix_sigma,
            gaussian_sigma: self.gaussian_sigma,
            threshold: self.threshold,
            lambda_max: self.lambda_max,
            init_noise: self.init_noise,
        }
    }

    pub fn build_model(&self, input_dim: usize, num_tasks: usize) -> Result<Model> {
        self.validate()?;
        Model::from_specs(&self.architecture, &self.sgc_defaults(), input_dim, num_tasks)
    }

    /// Task weights expanded to `num_tasks` entries.
    pub fn weights_for(&self, num_tasks: usize) -> Result<Vec<f64>> {
        match &self.task_weights {
            None => Ok(vec![1.0; num_tasks]),
            Some(w) if w.len() == num_tasks => Ok(w.clone()),
            Some(w) => Err(Error::parameter(
                "task_weights",
                format!("{} weights for {num_tasks} tasks", w.len()),
            )),
        }
    }

    /// `lr · decay_rate^⌊iteration / decay_every⌋`.
    pub fn learning_rate(&self, iteration: usize) -> f64 {
        learning_rate(self.lr, self.decay_rate, self.decay_every, iteration)
    }
}

/// Staircase exponential decay.
pub fn learning_rate(lr: f64, decay_rate: f64, decay_every: usize, iteration: usize) -> f64 {
    let steps = iteration / decay_every.max(1);
    lr * decay_rate.powi(i32::try_from(steps).unwrap_or(i32::MAX))
}
