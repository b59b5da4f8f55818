use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_value, task_loss};
use super::metrics::{rmse, roc_auc, TaskMetrics};
use super::optim::{adam_step, AdamState};
use super::{TaskType, TrainConfig};
use crate::autodiff::{ParamStore, Tape};
use crate::error::{Error, Result};
use crate::graph::{batch_graphs, Graph};
use crate::nn::{Mode, Model};
use crate::tensor::Tensor;

/// Independent random streams derived from one seed.
pub(crate) mod stream {
    pub const INIT: u64 = 0;
    pub const SHUFFLE: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const FOLDS: u64 = 3;
}

pub(crate) fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// One point of a learning curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub epoch: usize,
    pub split: String,
    pub metric_name: String,
    pub value: f64,
}

/// Loss and task metric of a model on a set of graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// `None` when every label is masked.
    pub loss: Option<f64>,
    pub metric: TaskMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: Model,
    pub params: ParamStore,
    pub task_type: TaskType,
    pub task_weights: Vec<f64>,
}

impl TrainedModel {
    /// Evaluation-mode scores, `B × T`, computed `chunk` graphs at a time.
    pub fn predict(&self, graphs: &[Graph], chunk: usize) -> Result<Tensor> {
        predict(&self.model, &self.params, graphs, chunk)
    }

    pub fn evaluate(&self, graphs: &[Graph], chunk: usize) -> Result<Evaluation> {
        evaluate(&self.model, &self.params, graphs, chunk, self.task_type, &self.task_weights)
    }
}

/// Result of [`train`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub trained: TrainedModel,
    pub curves: Vec<CurveRecord>,
    /// Optimizer steps taken.
    pub iterations: usize,
}

impl TrainReport {
    /// Values of one curve, ordered by epoch.
    pub fn curve(&self, split: &str, metric_name: &str) -> Vec<f64> {
        self.curves
            .iter()
            .filter(|r| r.split == split && r.metric_name == metric_name)
            .map(|r| r.value)
            .collect()
    }
}

/// Called after the initial evaluation (epoch 0) and after every epoch.
pub trait EpochObserver {
    fn on_epoch(&mut self, epoch: usize, model: &Model, params: &ParamStore) -> Result<()>;
}

impl<F: FnMut(usize, &Model, &ParamStore) -> Result<()>> EpochObserver for F {
    fn on_epoch(&mut self, epoch: usize, model: &Model, params: &ParamStore) -> Result<()> {
        self(epoch, model, params)
    }
}

pub(crate) fn predict(model: &Model, params: &ParamStore, graphs: &[Graph], chunk: usize) -> Result<Tensor> {
    let mut rows = Vec::with_capacity(graphs.len());
    for part in graphs.chunks(chunk.max(1)) {
        let scores = model.predict(params, part)?;
        rows.extend((0..scores.rows()).map(|b| scores.row(b).to_vec()));
    }
    if rows.is_empty() {
        return Ok(Tensor::zeros(0, model.num_tasks()));
    }
    Ok(Tensor::from_rows(&rows))
}

pub(crate) fn label_matrices(graphs: &[Graph], num_tasks: usize) -> Result<(Tensor, Tensor)> {
    let mut labels = Tensor::zeros(graphs.len(), num_tasks);
    let mut mask = Tensor::zeros(graphs.len(), num_tasks);
    for (b, g) in graphs.iter().enumerate() {
        let l = g
            .labels()
            .ok_or_else(|| Error::data(Some(format!("sample `{}`", g.id())), "sample has no labels"))?;
        if l.len() != num_tasks {
            return Err(Error::data(
                Some(format!("sample `{}`", g.id())),
                format!("{} labels, expected {num_tasks}", l.len()),
            ));
        }
        for t in 0..num_tasks {
            if g.label_mask()[t] {
                labels[(b, t)] = l[t];
                mask[(b, t)] = 1.0;
            }
        }
    }
    Ok((labels, mask))
}

pub(crate) fn evaluate(
    model: &Model,
    params: &ParamStore,
    graphs: &[Graph],
    chunk: usize,
    task: TaskType,
    weights: &[f64],
) -> Result<Evaluation> {
    let scores = predict(model, params, graphs, chunk)?;
    let (labels, mask) = label_matrices(graphs, model.num_tasks())?;
    let loss = match loss_value(task, &scores, &labels, &mask, weights) {
        Ok(v) => Some(v),
        Err(Error::NoSupervisedSignal) => None,
        Err(e) => return Err(e),
    };
    let metric = match task {
        TaskType::Regression => rmse(&scores, &labels, &mask)?,
        TaskType::Classification => roc_auc(&scores, &labels, &mask)?,
    };
    Ok(Evaluation { loss, metric })
}

/// Seeded split into `(train, validation)`, validation taking
/// `round(fraction · n)` graphs.
pub fn split_validation(graphs: &[Graph], fraction: f64, seed: u64) -> (Vec<Graph>, Vec<Graph>) {
    let mut idx: Vec<usize> = (0..graphs.len()).collect();
    idx.shuffle(&mut rng(seed, stream::SPLIT));
    let n_val = ((graphs.len() as f64) * fraction).round() as usize;
    let n_val = n_val.min(graphs.len().saturating_sub(1));
    let (val, train) = idx.split_at(n_val);
    let pick = |ids: &[usize]| {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.into_iter().map(|i| graphs[i].clone()).collect::<Vec<_>>()
    };
    (pick(train), pick(val))
}

/// Trains a fresh model on `train`, recording curves on `train` and
/// `validation`.
pub fn train(train: &[Graph], validation: &[Graph], config: &TrainConfig) -> Result<TrainReport> {
    train_observed(train, validation, config, &mut |_: usize, _: &Model, _: &ParamStore| Ok(()))
}

pub fn train_observed(
    train: &[Graph],
    validation: &[Graph],
    config: &TrainConfig,
    observer: &mut dyn EpochObserver,
) -> Result<TrainReport> {
    config.validate()?;
    let first = train.first().ok_or(Error::EmptyBatch)?;
    let num_tasks = first.num_tasks();
    let model = config.build_model(first.feature_dim(), num_tasks)?;
    let params = model.init_params(&mut rng(config.seed, stream::INIT))?;
    train_from(model, params, train, validation, config, observer)
}

/// Training loop from given initial parameters.
pub fn train_from(
    model: Model,
    mut params: ParamStore,
    train: &[Graph],
    validation: &[Graph],
    config: &TrainConfig,
    observer: &mut dyn EpochObserver,
) -> Result<TrainReport> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let weights = config.weights_for(model.num_tasks())?;
    if config.freeze_metric {
        for name in model.metric_param_names() {
            params.set_trainable(&name, false)?;
        }
    }
    let mut adam = AdamState::new(&params);
    let mut shuffle_rng = rng(config.seed, stream::SHUFFLE);
    let metric_name = config.task_type.metric_name();
    let mut curves = Vec::new();
    let record = |curves: &mut Vec<CurveRecord>, epoch: usize, params: &ParamStore| -> Result<()> {
        for (split, set) in [("train", train), ("validation", validation)] {
            if set.is_empty() {
                continue;
            }
            let e = evaluate(&model, params, set, config.batch_size, config.task_type, &weights)?;
            let mut push = |name: &str, value: f64| {
                curves.push(CurveRecord {
                    epoch,
                    split: split.into(),
                    metric_name: name.into(),
                    value,
                })
            };
            if let Some(l) = e.loss {
                push("loss", l);
            }
            if let Some(m) = e.metric.mean {
                push(metric_name, m);
            }
        }
        Ok(())
    };

    record(&mut curves, 0, &params)?;
    observer.on_epoch(0, &model, &params)?;

    let mut iteration = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let diverged = |iteration: usize, e: Error| {
            if e.is_numerical() {
                Error::Divergence {
                    epoch,
                    iteration,
                    last_good_epoch: epoch - 1,
                    detail: e.to_string(),
                }
            } else {
                e
            }
        };
        let mut batch_loss_sum = 0.0;
        let mut batches = 0usize;
        for ids in order.chunks(config.batch_size) {
            let graphs: Vec<Graph> = ids.iter().map(|&i| train[i].clone()).collect();
            let loss = step(&model, &mut params, &mut adam, &graphs, config, &weights, iteration)
                .map_err(|e| diverged(iteration, e))?;
            if let Some(l) = loss {
                batch_loss_sum += l;
                batches += 1;
            }
            iteration += 1;
        }
        if batches > 0 {
            curves.push(CurveRecord {
                epoch,
                split: "train".into(),
                metric_name: "batch_loss".into(),
                value: batch_loss_sum / batches as f64,
            });
        }
        record(&mut curves, epoch, &params).map_err(|e| diverged(iteration, e))?;
        observer.on_epoch(epoch, &model, &params)?;
    }

    Ok(TrainReport {
        trained: TrainedModel {
            model,
            params,
            task_type: config.task_type,
            task_weights: weights,
        },
        curves,
        iterations: iteration,
    })
}

/// One optimizer step on one minibatch. Returns `None` (and takes no step)
/// when every label in the batch is masked.
fn step(
    model: &Model,
    params: &mut ParamStore,
    adam: &mut AdamState,
    graphs: &[Graph],
    config: &TrainConfig,
    weights: &[f64],
    iteration: usize,
) -> Result<Option<f64>> {
    let n_max = graphs.iter().map(Graph::num_nodes).max().unwrap_or(0);
    let batch = batch_graphs(graphs, n_max)?;
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, params, &batch, Mode::Train)?;
    let loss = match task_loss(
        &mut tape,
        config.task_type,
        out.scores,
        batch.labels(),
        batch.label_mask(),
        weights,
    ) {
        Ok(l) => l,
        Err(Error::NoSupervisedSignal) => return Ok(None),
        Err(e) => return Err(e),
    };
    let value = tape.single(loss).item();
    params.zero_grads();
    tape.backward(loss, params)?;
    adam_step(params, adam, config.learning_rate(iteration))?;
    for update in &out.bn_updates {
        update.apply(params)?;
    }
    Ok(Some(value))
}
