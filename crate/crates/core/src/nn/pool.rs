use super::BatchContext;
use crate::autodiff::{Tape, Var};
use crate::error::Result;

/// Replaces every feature of node `v` by its maximum over `{v} ∪ N(v)` on
/// the intrinsic graph, feature by feature.
pub fn graph_max_pool(tape: &mut Tape, ctx: &BatchContext, x: Var) -> Result<Var> {
    tape.max_over_set(x, &ctx.neighbourhoods)
}

/// Sums node features of each sample into one row: `B × f`.
pub fn graph_gather(tape: &mut Tape, x: Var) -> Result<Var> {
    let per_sample = tape.sum_cols(x)?;
    tape.stack_rows(per_sample)
}
