use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    batch_norm_forward, graph_gather, graph_max_pool, multitask_head_forward, Activation, BatchContext, BatchNorm,
    BnUpdate, Dense, Head, LambdaPolicy, Mode, SgcLayer, SgcOutput,
};
use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{batch_graphs, Graph, GraphBatch};
use crate::tensor::Tensor;

/// One entry of the configured architecture. Unset SGC-LL fields fall back
/// to [`SgcDefaults`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    SgcLl {
        out_features: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        order: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        activation: Option<Activation>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metric_dim: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mix_sigma: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gaussian_sigma: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda_max: Option<LambdaPolicy>,
    },
    BatchNorm,
    MaxPool,
    Gather,
    Dense {
        out_features: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        activation: Option<Activation>,
    },
}

impl LayerSpec {
    pub fn sgc(out_features: usize) -> Self {
        LayerSpec::SgcLl {
            out_features,
            order: None,
            activation: None,
            metric_dim: None,
            mix_sigma: None,
            gaussian_sigma: None,
            threshold: None,
            lambda_max: None,
        }
    }
}

/// Alias kept for configs that describe the post-gather stack separately.
pub type GraphLevelSpec = LayerSpec;

/// Fallback settings for SGC-LL layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgcDefaults {
    pub order: usize,
    pub mix_sigma: f64,
    pub gaussian_sigma: f64,
    pub threshold: f64,
    pub lambda_max: LambdaPolicy,
    /// Std of the noise added to the identity when initialising `W_d`.
    pub init_noise: f64,
}

impl Default for SgcDefaults {
    fn default() -> Self {
        Self {
            order: 3,
            mix_sigma: 1.0,
            gaussian_sigma: 1.0,
            threshold: 0.0,
            lambda_max: LambdaPolicy::CompositionBound,
            init_noise: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Sgc(SgcLayer),
    BatchNorm(BatchNorm),
    MaxPool,
    Gather,
    Dense(Dense),
}

/// A full network: node-level layers, gather, graph-level layers, head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub layers: Vec<Layer>,
    pub head: Head,
    pub input_dim: usize,
    pub init_noise: f64,
}

/// Result of a forward pass.
#[derive(Clone, Debug)]
pub struct ModelOutput {
    /// `B × T` scores.
    pub scores: Var,
    /// One entry per SGC-LL layer, in order.
    pub sgc: Vec<SgcOutput>,
    /// Running-statistic updates (training mode only).
    pub bn_updates: Vec<BnUpdate>,
}

impl Model {
    pub fn from_specs(specs: &[LayerSpec], defaults: &SgcDefaults, input_dim: usize, num_tasks: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::parameter("input_dim", "must be positive"));
        }
        if num_tasks == 0 {
            return Err(Error::parameter("tasks", "need at least one task"));
        }
        let gathers = specs.iter().filter(|s| matches!(s, LayerSpec::Gather)).count();
        if gathers != 1 {
            return Err(Error::parameter(
                "architecture",
                format!("needs exactly one gather layer, found {gathers}"),
            ));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut width = input_dim;
        let mut gathered = false;
        for (i, spec) in specs.iter().enumerate() {
            let layer = match spec {
                LayerSpec::SgcLl {
                    out_features,
                    order,
                    activation,
                    metric_dim,
                    mix_sigma,
                    gaussian_sigma,
                    threshold,
                    lambda_max,
                } => {
                    if gathered {
                        return Err(Error::parameter(
                            format!("architecture[{i}]"),
                            "sgc_ll must come before gather",
                        ));
                    }
                    let layer = SgcLayer {
                        name: format!("sgc{i}"),
                        in_features: width,
                        out_features: *out_features,
                        order: order.unwrap_or(defaults.order),
                        metric_dim: metric_dim.unwrap_or(width),
                        gaussian_sigma: gaussian_sigma.unwrap_or(defaults.gaussian_sigma),
                        mix_sigma: mix_sigma.unwrap_or(defaults.mix_sigma),
                        threshold: threshold.unwrap_or(defaults.threshold),
                        activation: activation.unwrap_or_default(),
                        lambda_max: lambda_max.unwrap_or(defaults.lambda_max),
                    };
                    layer.validate()?;
                    width = *out_features;
                    Layer::Sgc(layer)
                }
                LayerSpec::BatchNorm => Layer::BatchNorm(BatchNorm::new(format!("bn{i}"), width)),
                LayerSpec::MaxPool => {
                    if gathered {
                        return Err(Error::parameter(
                            format!("architecture[{i}]"),
                            "max_pool must come before gather",
                        ));
                    }
                    Layer::MaxPool
                }
                LayerSpec::Gather => {
                    gathered = true;
                    Layer::Gather
                }
                LayerSpec::Dense {
                    out_features,
                    activation,
                } => {
                    if !gathered {
                        return Err(Error::parameter(
                            format!("architecture[{i}]"),
                            "dense must come after gather",
                        ));
                    }
                    let d = Dense {
                        name: format!("dense{i}"),
                        in_features: width,
                        out_features: *out_features,
                        activation: activation.unwrap_or_default(),
                    };
                    width = *out_features;
                    Layer::Dense(d)
                }
            };
            if width == 0 {
                return Err(Error::parameter(format!("architecture[{i}]"), "width must be positive"));
            }
            layers.push(layer);
        }
        Ok(Self {
            layers,
            head: Head {
                name: "head".into(),
                hidden: width,
                tasks: num_tasks,
            },
            input_dim,
            init_noise: defaults.init_noise,
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.head.tasks
    }

    pub fn sgc_layers(&self) -> impl Iterator<Item = &SgcLayer> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Sgc(s) => Some(s),
            _ => None,
        })
    }

    /// Fresh parameters for this architecture.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for layer in &self.layers {
            match layer {
                Layer::Sgc(s) => s.init_params(&mut store, self.init_noise, rng)?,
                Layer::BatchNorm(bn) => bn.init_params(&mut store)?,
                Layer::Dense(d) => d.init_params(&mut store, rng)?,
                Layer::MaxPool | Layer::Gather => {}
            }
        }
        self.head.init_params(&mut store, rng)?;
        Ok(store)
    }

    /// Names of every metric projection `W_d`.
    pub fn metric_param_names(&self) -> Vec<String> {
        self.sgc_layers().map(|s| s.w_d_name()).collect()
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, batch: &GraphBatch, mode: Mode) -> Result<ModelOutput> {
        let ctx = BatchContext::new(batch)?;
        let x = tape.constant_parts(batch.unpadded_features())?;
        self.forward_from(tape, store, &ctx, x, mode)
    }

    pub fn forward_from(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &BatchContext,
        input: Var,
        mode: Mode,
    ) -> Result<ModelOutput> {
        self.run(tape, store, ctx, input, mode, &mut Vec::new())
    }

    /// Forward pass that also returns the output of every layer, in order.
    pub fn trace(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &GraphBatch,
        mode: Mode,
    ) -> Result<(ModelOutput, Vec<Var>)> {
        let ctx = BatchContext::new(batch)?;
        let x = tape.constant_parts(batch.unpadded_features())?;
        let mut trace = Vec::with_capacity(self.layers.len());
        let out = self.run(tape, store, &ctx, x, mode, &mut trace)?;
        Ok((out, trace))
    }

    fn run(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &BatchContext,
        input: Var,
        mode: Mode,
        trace: &mut Vec<Var>,
    ) -> Result<ModelOutput> {
        let mut x = input;
        let mut sgc = Vec::new();
        let mut bn_updates = Vec::new();
        for layer in &self.layers {
            x = match layer {
                Layer::Sgc(s) => {
                    let out = s.forward(tape, store, ctx, x)?;
                    let f = out.features;
                    sgc.push(out);
                    f
                }
                Layer::BatchNorm(bn) => {
                    let (y, update) = batch_norm_forward(tape, store, bn, x, mode)?;
                    bn_updates.extend(update);
                    y
                }
                Layer::MaxPool => graph_max_pool(tape, ctx, x)?,
                Layer::Gather => graph_gather(tape, x)?,
                Layer::Dense(d) => d.forward(tape, store, x)?,
            };
            trace.push(x);
        }
        let scores = multitask_head_forward(tape, store, &self.head, x)?;
        Ok(ModelOutput {
            scores,
            sgc,
            bn_updates,
        })
    }

    /// Evaluation-mode scores for a list of graphs, `B × T`.
    pub fn predict(&self, store: &ParamStore, graphs: &[Graph]) -> Result<Tensor> {
        let n_max = graphs.iter().map(Graph::num_nodes).max().unwrap_or(0);
        let batch = batch_graphs(graphs, n_max)?;
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, store, &batch, Mode::Eval)?;
        Ok(tape.single(out.scores).clone())
    }
}
