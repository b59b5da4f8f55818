use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A named tensor with its gradient accumulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    #[serde(skip)]
    pub grad: Option<Tensor>,
    /// Frozen parameters still receive gradients but the optimizer skips them.
    pub trainable: bool,
}

/// Registry of model parameters and non-trainable buffers, in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::structural(format!("duplicate parameter name `{name}`")));
        }
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            value,
            grad: None,
            trainable: true,
        });
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::structural(format!("unknown parameter `{name}`")))
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        Ok(&self.params[self.id(name)?])
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.get(name)?.value)
    }

    pub fn by_id(&self, id: usize) -> &Param {
        &self.params[id]
    }

    pub fn by_id_mut(&mut self, id: usize) -> &mut Param {
        &mut self.params[id]
    }

    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self.id(name)?;
        let p = &mut self.params[id];
        if p.value.shape() != value.shape() {
            return Err(Error::Shape {
                op: "set_value",
                lhs: p.value.shape(),
                rhs: value.shape(),
            });
        }
        p.value = value;
        Ok(())
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        let id = self.id(name)?;
        self.params[id].trainable = trainable;
        Ok(())
    }

    /// Gradient of a parameter, zeros if nothing was accumulated.
    pub fn grad(&self, name: &str) -> Result<Tensor> {
        let p = self.get(name)?;
        Ok(p.grad
            .clone()
            .unwrap_or_else(|| Tensor::zeros(p.value.rows(), p.value.cols())))
    }

    pub(crate) fn accumulate_grad(&mut self, id: usize, g: &Tensor) -> Result<()> {
        let p = &mut self.params[id];
        match &mut p.grad {
            Some(acc) => acc.add_assign(g),
            None => {
                if g.shape() != p.value.shape() {
                    return Err(Error::Shape {
                        op: "accumulate_grad",
                        lhs: p.value.shape(),
                        rhs: g.shape(),
                    });
                }
                p.grad = Some(g.clone());
                Ok(())
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries across all trainable parameters.
    pub fn num_trainable_scalars(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    /// Restores the name index after deserialisation.
    pub fn reindex(&mut self) {
        self.index = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(2, 2)).unwrap();
        assert!(s.insert("w", Tensor::zeros(1, 1)).is_err());
    }

    #[test]
    fn grad_shape_is_checked() {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::zeros(2, 2)).unwrap();
        assert!(s.accumulate_grad(id, &Tensor::zeros(1, 2)).is_err());
        s.accumulate_grad(id, &Tensor::filled(2, 2, 1.0)).unwrap();
        s.accumulate_grad(id, &Tensor::filled(2, 2, 1.0)).unwrap();
        assert_eq!(s.grad("w").unwrap(), Tensor::filled(2, 2, 2.0));
    }

    #[test]
    fn serde_round_trip_keeps_lookup() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::scalar(1.5)).unwrap();
        s.insert("b", Tensor::zeros(1, 3)).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let mut back: ParamStore = serde_json::from_str(&json).unwrap();
        back.reindex();
        assert_eq!(back.value("a").unwrap().item(), 1.5);
    }
}
