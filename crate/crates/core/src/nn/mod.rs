//! Differentiable network layers over ragged graph batches.
//!
//! Node-level layers consume and produce a tape node with one `n_b × f` part
//! per sample, covering valid nodes only; padding never enters a
//! computation. [`graph_gather`] collapses that into a single `B × f` tensor
//! for the graph-level layers and the multi-task head.

mod dense;
mod model;
mod norm;
mod pool;
mod sgc;

pub use dense::{multitask_head_forward, Dense, Head};
pub use model::{GraphLevelSpec, Layer, LayerSpec, Model, ModelOutput, SgcDefaults};
pub use norm::{batch_norm_forward, BatchNorm, BnUpdate};
pub use pool::{graph_gather, graph_max_pool};
pub use sgc::{sgc_ll_forward, LambdaPolicy, SgcLayer, SgcLayerParams, SgcOutput};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::graph::{normalized_laplacian, GraphBatch};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Identity => Ok(x),
        }
    }

    pub fn apply_plain(self, x: &Tensor) -> Tensor {
        match self {
            Activation::Relu => x.map(|v| v.max(0.0)),
            Activation::Identity => x.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-batch structure shared by every layer of a forward pass.
#[derive(Clone, Debug)]
pub struct BatchContext {
    pub node_counts: Vec<usize>,
    /// Intrinsic normalized Laplacian of each sample (valid nodes only).
    pub intrinsic: Vec<Tensor>,
    /// Closed neighbourhoods on the intrinsic graph.
    pub neighbourhoods: Vec<Vec<Vec<usize>>>,
}

impl BatchContext {
    pub fn new(batch: &GraphBatch) -> Result<Self> {
        let intrinsic = (0..batch.len())
            .map(|b| normalized_laplacian(&batch.sample_adjacency(b)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            node_counts: batch.node_counts().to_vec(),
            intrinsic,
            neighbourhoods: batch.closed_neighbourhoods(),
        })
    }

    pub fn len(&self) -> usize {
        self.node_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_counts.is_empty()
    }

    pub(crate) fn identities(&self) -> Vec<Tensor> {
        self.node_counts.iter().map(|&n| Tensor::identity(n)).collect()
    }
}

/// Glorot-uniform initial weights.
pub(crate) fn glorot<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}
