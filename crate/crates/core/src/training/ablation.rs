use serde::{Deserialize, Serialize};

use super::trainer::{train, TrainReport};
use super::{TaskType, TrainConfig};
use crate::error::Result;
use crate::graph::Graph;

/// Summary of one arm of a paired run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    /// Task metric on the validation set after the last epoch.
    pub final_validation: f64,
    /// Training loss per epoch, epoch 0 first.
    pub train_loss: Vec<f64>,
}

impl ArmSummary {
    fn from_report(report: &TrainReport, metric: &str) -> Self {
        Self {
            final_validation: report.curve("validation", metric).last().copied().unwrap_or(f64::NAN),
            train_loss: report.curve("train", "loss"),
        }
    }

    pub fn final_train_loss(&self) -> f64 {
        self.train_loss.last().copied().unwrap_or(f64::NAN)
    }
}

/// Evolving against frozen Laplacian for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub seed: u64,
    pub task_type: TaskType,
    pub evolving: ArmSummary,
    pub frozen: ArmSummary,
}

impl AblationRow {
    /// Whether the evolving arm ends with the better validation metric.
    pub fn evolving_wins(&self) -> bool {
        match self.task_type {
            TaskType::Regression => self.evolving.final_validation < self.frozen.final_validation,
            TaskType::Classification => self.evolving.final_validation > self.frozen.final_validation,
        }
    }

    /// First epoch at which the evolving arm's training loss is at or below
    /// the frozen arm's final training loss.
    pub fn epochs_to_match(&self) -> Option<usize> {
        let target = self.frozen.final_train_loss();
        self.evolving.train_loss.iter().position(|&l| l <= target)
    }

    /// `epochs_to_match / epochs trained by the frozen arm`.
    pub fn match_fraction(&self) -> Option<f64> {
        let total = self.frozen.train_loss.len().saturating_sub(1);
        self.epochs_to_match().filter(|_| total > 0).map(|e| e as f64 / total as f64)
    }
}

/// The fixed-graph baseline: metric frozen and the learned graph used alone.
pub fn frozen_config(config: &TrainConfig) -> TrainConfig {
    TrainConfig {
        freeze_metric: true,
        mix_sigma: 1.0,
        ..config.clone()
    }
}

pub fn evolving_config(config: &TrainConfig) -> TrainConfig {
    TrainConfig {
        freeze_metric: false,
        ..config.clone()
    }
}

/// Paired evolving and frozen runs, one pair per seed, on a fixed split.
pub fn ablate(train_set: &[Graph], validation: &[Graph], config: &TrainConfig, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    let metric = config.task_type.metric_name();
    crate::parallel::try_map_range(seeds.len(), |i| {
        let seed = seeds[i];
        let run = |c: TrainConfig| train(train_set, validation, &TrainConfig { seed, ..c });
        let evolving = run(evolving_config(config))?;
        let frozen = run(frozen_config(config))?;
        Ok(AblationRow {
            seed,
            task_type: config.task_type,
            evolving: ArmSummary::from_report(&evolving, metric),
            frozen: ArmSummary::from_report(&frozen, metric),
        })
    })
}
