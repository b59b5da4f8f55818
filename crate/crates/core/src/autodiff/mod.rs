//! Dense reverse-mode differentiation over ragged per-sample batches.

mod params;
mod tape;

pub use params::{Param, ParamStore};
pub use tape::{power_iteration, sigmoid, softplus, Gradients, PowerIteration, Tape, Var};
