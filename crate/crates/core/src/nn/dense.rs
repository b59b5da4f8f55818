use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Activation;
use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fully connected graph-level layer on the gathered `B × f` representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        store.insert(self.weight_name(), super::glorot(self.in_features, self.out_features, rng))?;
        store.insert(self.bias_name(), Tensor::zeros(1, self.out_features))?;
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, &self.weight_name())?;
        let b = tape.param(store, &self.bias_name())?;
        let y = tape.matmul(x, w)?;
        let y = tape.add(y, b)?;
        self.activation.apply(tape, y)
    }
}

/// One fully connected leaf per task on top of the gathered representation.
/// Outputs raw scores (logits for classification).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub name: String,
    pub hidden: usize,
    pub tasks: usize,
}

impl Head {
    pub fn weight_name(&self, task: usize) -> String {
        format!("{}.task{task}.w", self.name)
    }

    pub fn bias_name(&self, task: usize) -> String {
        format!("{}.task{task}.b", self.name)
    }

    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        for t in 0..self.tasks {
            store.insert(self.weight_name(t), super::glorot(self.hidden, 1, rng))?;
            store.insert(self.bias_name(t), Tensor::zeros(1, 1))?;
        }
        Ok(())
    }
}

/// `B × h` gathered features to `B × T` scores.
pub fn multitask_head_forward(tape: &mut Tape, store: &ParamStore, head: &Head, gathered: Var) -> Result<Var> {
    let g = tape.single(gathered);
    if g.cols() != head.hidden || tape.num_parts(gathered) != 1 {
        return Err(Error::structural(format!(
            "head `{}` expects a single {}-column input, got {} part(s) of shape {:?}",
            head.name,
            head.hidden,
            tape.num_parts(gathered),
            g.shape()
        )));
    }
    let batch = g.rows();
    let mut scores: Option<Var> = None;
    for t in 0..head.tasks {
        let w = tape.param(store, &head.weight_name(t))?;
        let b = tape.param(store, &head.bias_name(t))?;
        let s = tape.matmul(gathered, w)?;
        let s = tape.add(s, b)?;
        let placed = tape.pad(s, batch, head.tasks, 0, t)?;
        scores = Some(match scores {
            None => placed,
            Some(acc) => tape.add(acc, placed)?,
        });
    }
    scores.ok_or_else(|| Error::structural(format!("head `{}` has no tasks", head.name)))
}
