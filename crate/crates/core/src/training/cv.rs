use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::TaskMetrics;
use super::trainer::{evaluate, rng, split_validation, stream, train, TrainedModel};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::parallel;

/// Seeded partition of `0..n` into `folds` groups whose sizes differ by at
/// most one. Each group is sorted.
pub fn fold_assignments(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::parameter("folds", "need at least 2 folds"));
    }
    if n < folds {
        return Err(Error::parameter("folds", format!("{folds} folds for {n} samples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng(seed, stream::FOLDS));
    let mut out = vec![Vec::with_capacity(n / folds + 1); folds];
    for (k, i) in idx.into_iter().enumerate() {
        out[k % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_size: usize,
    pub metrics: TaskMetrics,
}

/// Mean and sample standard deviation over folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub metric_name: String,
    pub folds: Vec<FoldOutcome>,
    /// Per task; `None` when no fold could evaluate the task.
    pub per_task: Vec<Option<MeanStd>>,
    pub overall: Option<MeanStd>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample statistics (`n − 1` in the denominator; 0 for one value).
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

/// Anything that maps graphs to `B × T` scores.
pub trait Predictor {
    fn predict(&self, graphs: &[Graph]) -> Result<crate::tensor::Tensor>;
}

impl Predictor for TrainedModel {
    fn predict(&self, graphs: &[Graph]) -> Result<crate::tensor::Tensor> {
        TrainedModel::predict(self, graphs, 256)
    }
}

/// Predicts the per-task mean of the observed training labels.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanPredictor {
    pub means: Vec<f64>,
}

impl MeanPredictor {
    pub fn fit(graphs: &[Graph]) -> Result<Self> {
        let t = graphs.first().ok_or(Error::EmptyBatch)?.num_tasks();
        let (labels, mask) = super::trainer::label_matrices(graphs, t)?;
        let means = (0..t)
            .map(|j| {
                let (s, c) = (0..labels.rows())
                    .filter(|&b| mask[(b, j)] != 0.0)
                    .fold((0.0, 0usize), |(s, c), b| (s + labels[(b, j)], c + 1));
                if c > 0 {
                    s / c as f64
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self { means })
    }
}

impl Predictor for MeanPredictor {
    fn predict(&self, graphs: &[Graph]) -> Result<crate::tensor::Tensor> {
        Ok(crate::tensor::Tensor::from_fn(graphs.len(), self.means.len(), |_, t| self.means[t]))
    }
}

/// k-fold cross-validation of the configured model. Each training fold
/// holds out `validation_fraction` of itself for curves; the reported metric
/// is on the held-out fold.
pub fn cross_validate(graphs: &[Graph], config: &TrainConfig) -> Result<CvSummary> {
    cross_validate_with(graphs, config, |train_set, cfg| {
        let (tr, val) = split_validation(train_set, cfg.validation_fraction, cfg.seed);
        Ok(train(&tr, &val, cfg)?.trained)
    })
}

/// Cross-validation with a custom fitting routine. Folds run in parallel.
pub fn cross_validate_with<P, F>(graphs: &[Graph], config: &TrainConfig, fit: F) -> Result<CvSummary>
where
    P: Predictor,
    F: Fn(&[Graph], &TrainConfig) -> Result<P> + Sync + Send,
{
    config.validate()?;
    let folds = fold_assignments(graphs.len(), config.folds, config.seed)?;
    let num_tasks = graphs[0].num_tasks();
    let outcomes = parallel::try_map_range(folds.len(), |k| {
        let mut in_test = vec![false; graphs.len()];
        for &i in &folds[k] {
            in_test[i] = true;
        }
        let train_set: Vec<Graph> = (0..graphs.len()).filter(|&i| !in_test[i]).map(|i| graphs[i].clone()).collect();
        let test_set: Vec<Graph> = folds[k].iter().map(|&i| graphs[i].clone()).collect();
        let predictor = fit(&train_set, config)?;
        let scores = predictor.predict(&test_set)?;
        let (labels, mask) = super::trainer::label_matrices(&test_set, num_tasks)?;
        let metrics = match config.task_type {
            super::TaskType::Regression => super::metrics::rmse(&scores, &labels, &mask)?,
            super::TaskType::Classification => super::metrics::roc_auc(&scores, &labels, &mask)?,
        };
        Ok::<_, Error>(FoldOutcome {
            fold: k,
            test_size: test_set.len(),
            metrics,
        })
    })?;

    let per_task = (0..num_tasks)
        .map(|t| {
            let v: Vec<f64> = outcomes.iter().filter_map(|o| o.metrics.per_task[t]).collect();
            MeanStd::of(&v)
        })
        .collect();
    let overall: Vec<f64> = outcomes.iter().filter_map(|o| o.metrics.mean).collect();
    Ok(CvSummary {
        metric_name: config.task_type.metric_name().into(),
        folds: outcomes,
        per_task,
        overall: MeanStd::of(&overall),
    })
}

/// Held-out evaluation of a trained model, for callers that manage their
/// own splits.
pub fn evaluate_model(trained: &TrainedModel, graphs: &[Graph]) -> Result<TaskMetrics> {
    Ok(evaluate(
        &trained.model,
        &trained.params,
        graphs,
        256,
        trained.task_type,
        &trained.task_weights,
    )?
    .metric)
}
