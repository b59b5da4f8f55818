use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::trainer::EpochObserver;
use crate::autodiff::{ParamStore, Tape};
use crate::error::{Error, Result};
use crate::graph::{batch_graphs, Graph};
use crate::nn::{Mode, Model};
use crate::tensor::Tensor;

/// Learned similarity `S` of one sample at one SGC-LL layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySnapshot {
    pub sample_id: String,
    /// Index among the model's SGC-LL layers.
    pub layer: usize,
    pub epoch: usize,
    pub matrix: Tensor,
}

/// Evaluation-mode similarity matrix of `graph` at SGC-LL layer `layer`.
pub fn snapshot_similarity(
    model: &Model,
    params: &ParamStore,
    graph: &Graph,
    layer: usize,
    epoch: usize,
) -> Result<SimilaritySnapshot> {
    let batch = batch_graphs(std::slice::from_ref(graph), graph.num_nodes())?;
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, params, &batch, Mode::Eval)?;
    let sgc = out.sgc.get(layer).ok_or_else(|| {
        Error::parameter(
            "layer",
            format!("model has {} SGC-LL layers, asked for index {layer}", out.sgc.len()),
        )
    })?;
    Ok(SimilaritySnapshot {
        sample_id: graph.id().to_string(),
        layer,
        epoch,
        matrix: sgc.similarity[0].clone(),
    })
}

/// Observer that records snapshots at chosen epochs.
#[derive(Clone, Debug)]
pub struct SnapshotRecorder {
    pub graph: Graph,
    pub layer: usize,
    pub epochs: BTreeSet<usize>,
    pub snapshots: Vec<SimilaritySnapshot>,
}

impl SnapshotRecorder {
    pub fn new(graph: Graph, layer: usize, epochs: impl IntoIterator<Item = usize>) -> Self {
        Self {
            graph,
            layer,
            epochs: epochs.into_iter().collect(),
            snapshots: Vec::new(),
        }
    }

    pub fn at(&self, epoch: usize) -> Option<&SimilaritySnapshot> {
        self.snapshots.iter().find(|s| s.epoch == epoch)
    }
}

impl EpochObserver for SnapshotRecorder {
    fn on_epoch(&mut self, epoch: usize, model: &Model, params: &ParamStore) -> Result<()> {
        if self.epochs.contains(&epoch) {
            let s = snapshot_similarity(model, params, &self.graph, self.layer, epoch)?;
            self.snapshots.push(s);
        }
        Ok(())
    }
}
