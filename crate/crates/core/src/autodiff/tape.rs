//! Recorded forward computation with exact reverse-mode gradients.
//!
//! Each node on the tape holds a *ragged* value: one [`Tensor`] per sample in
//! the batch (each sample keeps its own node count), or a single shared
//! tensor. Binary primitives broadcast a single-part operand across all parts
//! and broadcast `1 × c` / `r × 1` / `1 × 1` shapes numpy-style. The backward
//! pass reduces broadcast gradients back to the operand's shape, summing parts
//! in sample order so results do not depend on the worker count.

use crate::autodiff::params::ParamStore;
use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    Relu(Var),
    Exp(Var),
    Sqrt(Var),
    InvSqrt(Var),
    Recip(Var),
    Sigmoid(Var),
    Softplus(Var),
    SumRows(Var),
    SumCols(Var),
    SumAll(Var),
    SumParts(Var),
    StackRows(Var),
    Slice { src: Var, r0: usize, c0: usize },
    Pad { src: Var, r0: usize, c0: usize },
    MaxOverSet { src: Var, winners: Vec<Vec<usize>> },
    PairwiseSqDist(Var),
    TopEigen { src: Var, vectors: Vec<Tensor> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "elementwise_mul",
            Op::Scale(..) => "scalar_mul",
            Op::Transpose(_) => "transpose",
            Op::Relu(_) => "relu",
            Op::Exp(_) => "exp",
            Op::Sqrt(_) => "sqrt",
            Op::InvSqrt(_) => "inv_sqrt",
            Op::Recip(_) => "recip",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softplus(_) => "softplus",
            Op::SumRows(_) => "sum_rows",
            Op::SumCols(_) => "sum_cols",
            Op::SumAll(_) => "sum_all",
            Op::SumParts(_) => "sum_parts",
            Op::StackRows(_) => "stack_rows",
            Op::Slice { .. } => "slice",
            Op::Pad { .. } => "pad",
            Op::MaxOverSet { .. } => "max_over_set",
            Op::PairwiseSqDist(_) => "pairwise_sq_dist",
            Op::TopEigen { .. } => "top_eigenvalue",
        }
    }
}

struct Node {
    value: Vec<Tensor>,
    op: Op,
}

/// Options for the dominant-eigenvalue primitive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIteration {
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_iters: 1000,
        }
    }
}

/// Single-writer record of a forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node on the tape.
pub struct Gradients {
    grads: Vec<Option<Vec<Tensor>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[Tensor]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for a single-part node, zeros-shaped `None` if unreachable.
    pub fn single(&self, v: Var) -> Option<&Tensor> {
        self.get(v).map(|g| &g[0])
    }
}

#[inline]
fn part(v: &[Tensor], b: usize) -> &Tensor {
    if v.len() == 1 {
        &v[0]
    } else {
        &v[b]
    }
}

fn broadcast_dim(a: usize, b: usize) -> Option<usize> {
    if a == b {
        Some(a)
    } else if a == 1 {
        Some(b)
    } else if b == 1 {
        Some(a)
    } else {
        None
    }
}

fn broadcast_zip(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    let shape_err = || Error::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    };
    let rows = broadcast_dim(a.rows(), b.rows()).ok_or_else(shape_err)?;
    let cols = broadcast_dim(a.cols(), b.cols()).ok_or_else(shape_err)?;
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let (ar, ac) = (a.rows() > 1, a.cols() > 1);
    let (br, bc) = (b.rows() > 1, b.cols() > 1);
    Ok(Tensor::from_fn(rows, cols, |i, j| {
        let x = a[(if ar { i } else { 0 }, if ac { j } else { 0 })];
        let y = b[(if br { i } else { 0 }, if bc { j } else { 0 })];
        f(x, y)
    }))
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to_shape(g: Tensor, shape: [usize; 2]) -> Tensor {
    let mut g = g;
    if shape[0] == 1 && g.rows() != 1 {
        g = g.col_sums();
    }
    if shape[1] == 1 && g.cols() != 1 {
        g = g.row_sums();
    }
    g
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Per-part values of a node.
    pub fn value(&self, v: Var) -> &[Tensor] {
        &self.nodes[v.0].value
    }

    /// Value of a single-part node (or the first part).
    pub fn single(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value[0]
    }

    pub fn num_parts(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    fn push(&mut self, value: Vec<Tensor>, op: Op) -> Result<Var> {
        if let Some((p, _)) = value.iter().enumerate().find(|(_, t)| !t.is_finite()) {
            return Err(Error::numerical(
                op.name(),
                format!("non-finite value produced in part {p}"),
            ));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(vec![t], Op::Constant)
    }

    /// A per-sample constant (one tensor per part).
    pub fn constant_parts(&mut self, parts: Vec<Tensor>) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::structural("constant with zero parts"));
        }
        self.push(parts, Op::Constant)
    }

    /// Leaf bound to a parameter in `store`; backward accumulates into it.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let id = store.id(name)?;
        self.push(vec![store.by_id(id).value.clone()], Op::Param(id))
    }

    fn out_parts(&self, a: Var, b: Var, op: &'static str) -> Result<usize> {
        let (pa, pb) = (self.num_parts(a), self.num_parts(b));
        if pa == pb || pb == 1 {
            Ok(pa)
        } else if pa == 1 {
            Ok(pb)
        } else {
            Err(Error::structural(format!(
                "{op}: part counts {pa} and {pb} do not broadcast"
            )))
        }
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(&Tensor) -> Result<Tensor> + Sync + Send) -> Result<Var> {
        let av = self.value(a);
        let out = parallel::try_map_range(av.len(), |b| f(&av[b]))?;
        self.push(out, op)
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(&Tensor, &Tensor) -> Result<Tensor> + Sync + Send,
    ) -> Result<Var> {
        let n = self.out_parts(a, b, op.name())?;
        let (av, bv) = (self.value(a), self.value(b));
        let out = parallel::try_map_range(n, |p| f(part(av, p), part(bv, p)))?;
        self.push(out, op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::MatMul(a, b), |x, y| x.matmul(y))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| broadcast_zip("add", x, y, |p, q| p + q))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| broadcast_zip("sub", x, y, |p, q| p - q))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| {
            broadcast_zip("elementwise_mul", x, y, |p, q| p * q)
        })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, Op::Scale(a, c), |x| Ok(x.scale(c)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Transpose(a), |x| Ok(x.transpose()))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Relu(a), |x| Ok(x.map(|v| v.max(0.0))))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Exp(a), |x| Ok(x.map(f64::exp)))
    }

    /// Square root; the derivative at exactly zero is taken as zero.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sqrt(a), |x| {
            if x.data().iter().any(|&v| v < 0.0) {
                return Err(Error::numerical("sqrt", "negative input"));
            }
            Ok(x.map(f64::sqrt))
        })
    }

    /// `x^{-1/2}` with `0 ↦ 0` (used for zero-degree nodes).
    pub fn inv_sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::InvSqrt(a), |x| {
            if x.data().iter().any(|&v| v < 0.0) {
                return Err(Error::numerical("inv_sqrt", "negative input"));
            }
            Ok(x.map(|v| if v == 0.0 { 0.0 } else { 1.0 / v.sqrt() }))
        })
    }

    pub fn recip(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Recip(a), |x| Ok(x.map(|v| 1.0 / v)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sigmoid(a), |x| Ok(x.map(sigmoid)))
    }

    /// `ln(1 + e^x)` in overflow-free form.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Softplus(a), |x| Ok(x.map(softplus)))
    }

    /// Row sums: `n × c → n × 1`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::SumRows(a), |x| Ok(x.row_sums()))
    }

    /// Column sums: `n × c → 1 × c`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::SumCols(a), |x| Ok(x.col_sums()))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::SumAll(a), |x| Ok(Tensor::scalar(x.sum())))
    }

    /// Sums equally shaped parts into one shared tensor, in part order.
    pub fn sum_parts(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let mut acc = av[0].clone();
        for t in &av[1..] {
            acc.add_assign(t)?;
        }
        self.push(vec![acc], Op::SumParts(a))
    }

    /// Stacks `1 × c` parts into a single `B × c` tensor.
    pub fn stack_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let cols = av[0].cols();
        let mut data = Vec::with_capacity(av.len() * cols);
        for t in av {
            if t.rows() != 1 || t.cols() != cols {
                return Err(Error::Shape {
                    op: "stack_rows",
                    lhs: [1, cols],
                    rhs: t.shape(),
                });
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::from_vec(av.len(), cols, data)?;
        self.push(vec![out], Op::StackRows(a))
    }

    pub fn slice(&mut self, a: Var, r0: usize, c0: usize, rows: usize, cols: usize) -> Result<Var> {
        self.unary(a, Op::Slice { src: a, r0, c0 }, |x| x.block(r0, c0, rows, cols))
    }

    pub fn pad(&mut self, a: Var, rows: usize, cols: usize, r0: usize, c0: usize) -> Result<Var> {
        self.unary(a, Op::Pad { src: a, r0, c0 }, |x| x.padded(rows, cols, r0, c0))
    }

    /// For every row `i` and column `j`, the maximum of `x[k][j]` over
    /// `k ∈ sets[part][i]`. Ties go to the lowest row index.
    pub fn max_over_set(&mut self, a: Var, sets: &[Vec<Vec<usize>>]) -> Result<Var> {
        let av = self.value(a);
        if sets.len() != av.len() {
            return Err(Error::structural(format!(
                "max_over_set: {} neighbourhood lists for {} parts",
                sets.len(),
                av.len()
            )));
        }
        let results = parallel::try_map_range(av.len(), |p| max_over_set_part(&av[p], &sets[p]))?;
        let (values, winners): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        self.push(values, Op::MaxOverSet { src: a, winners })
    }

    /// `S[i][j] = ‖z_i − z_j‖²`, exactly symmetric with an exact zero diagonal.
    pub fn pairwise_sq_dist(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::PairwiseSqDist(a), |z| Ok(pairwise_sq_dist(z)))
    }

    /// Dominant eigenvalue of each (symmetric PSD) part, as `1 × 1`, by power
    /// iteration. The backward pass uses `∂λ/∂A = v vᵀ`.
    pub fn top_eigenvalue(&mut self, a: Var, opts: PowerIteration) -> Result<Var> {
        let av = self.value(a);
        let results = parallel::try_map_range(av.len(), |p| power_iteration(&av[p], opts))?;
        let mut values = Vec::with_capacity(results.len());
        let mut vectors = Vec::with_capacity(results.len());
        for (lambda, v) in results {
            values.push(Tensor::scalar(lambda));
            vectors.push(v);
        }
        self.push(values, Op::TopEigen { src: a, vectors })
    }

    /// Reverse sweep from the scalar `loss`, accumulating parameter gradients
    /// into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 || lv[0].shape() != [1, 1] {
            return Err(Error::structural(format!(
                "backward needs a scalar loss, got {} part(s) of shape {:?}",
                lv.len(),
                lv[0].shape()
            )));
        }
        let mut grads: Vec<Option<Vec<Tensor>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![Tensor::scalar(1.0)]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let contributions = self.vjp(node, &g)?;
            for (input, parts) in contributions {
                self.accumulate(&mut grads, input, parts)?;
            }
            grads[idx] = Some(g);
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads[idx]) {
                store.accumulate_grad(*id, &g[0])?;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<Tensor>>], input: Var, parts: Vec<Tensor>) -> Result<()> {
        let target_parts = self.num_parts(input);
        let parts = if target_parts == 1 && parts.len() > 1 {
            let mut it = parts.into_iter();
            let mut acc = it.next().expect("non-empty");
            for t in it {
                acc.add_assign(&t)?;
            }
            vec![acc]
        } else {
            parts
        };
        match &mut grads[input.0] {
            Some(existing) => {
                for (e, p) in existing.iter_mut().zip(&parts) {
                    e.add_assign(p)?;
                }
            }
            slot @ None => *slot = Some(parts),
        }
        Ok(())
    }

    /// Vector-Jacobian products of one node for each of its inputs.
    fn vjp(&self, node: &Node, g: &[Tensor]) -> Result<Vec<(Var, Vec<Tensor>)>> {
        let out = &node.value;
        let n = g.len();
        let map = |f: &(dyn Fn(usize) -> Result<Tensor> + Sync)| parallel::try_map_range(n, f);

        Ok(match &node.op {
            Op::Constant | Op::Param(_) => vec![],
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = map(&|p| g[p].matmul(&part(bv, p).transpose()))?;
                let gb = map(&|p| part(av, p).transpose().matmul(&g[p]))?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let (sa, sb) = (self.value(*a)[0].shape(), self.value(*b)[0].shape());
                let ga = map(&|p| Ok(reduce_to_shape(g[p].clone(), sa)))?;
                let gb = map(&|p| Ok(reduce_to_shape(g[p].scale(sign), sb)))?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = map(&|p| {
                    let full = broadcast_zip("mul_vjp", &g[p], part(bv, p), |x, y| x * y)?;
                    Ok(reduce_to_shape(full, part(av, p).shape()))
                })?;
                let gb = map(&|p| {
                    let full = broadcast_zip("mul_vjp", &g[p], part(av, p), |x, y| x * y)?;
                    Ok(reduce_to_shape(full, part(bv, p).shape()))
                })?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(a, c) => vec![(*a, map(&|p| Ok(g[p].scale(*c)))?)],
            Op::Transpose(a) => vec![(*a, map(&|p| Ok(g[p].transpose()))?)],
            Op::Relu(a) => {
                let av = self.value(*a);
                vec![(*a, map(&|p| g[p].zip_map(&av[p], |gi, x| if x > 0.0 { gi } else { 0.0 }))?)]
            }
            Op::Exp(a) => vec![(*a, map(&|p| g[p].hadamard(&out[p]))?)],
            Op::Sqrt(a) => vec![(
                *a,
                map(&|p| g[p].zip_map(&out[p], |gi, y| if y > 0.0 { gi / (2.0 * y) } else { 0.0 }))?,
            )],
            Op::InvSqrt(a) => vec![(*a, map(&|p| g[p].zip_map(&out[p], |gi, y| -0.5 * gi * y * y * y))?)],
            Op::Recip(a) => vec![(*a, map(&|p| g[p].zip_map(&out[p], |gi, y| -gi * y * y))?)],
            Op::Sigmoid(a) => vec![(*a, map(&|p| g[p].zip_map(&out[p], |gi, y| gi * y * (1.0 - y)))?)],
            Op::Softplus(a) => {
                let av = self.value(*a);
                vec![(*a, map(&|p| g[p].zip_map(&av[p], |gi, x| gi * sigmoid(x)))?)]
            }
            Op::SumRows(a) => {
                let av = self.value(*a);
                vec![(*a, map(&|p| Ok(Tensor::from_fn(av[p].rows(), av[p].cols(), |i, _| g[p][(i, 0)])))?)]
            }
            Op::SumCols(a) => {
                let av = self.value(*a);
                vec![(*a, map(&|p| Ok(Tensor::from_fn(av[p].rows(), av[p].cols(), |_, j| g[p][(0, j)])))?)]
            }
            Op::SumAll(a) => {
                let av = self.value(*a);
                vec![(*a, map(&|p| Ok(Tensor::filled(av[p].rows(), av[p].cols(), g[p].item())))?)]
            }
            Op::SumParts(a) => {
                let k = self.num_parts(*a);
                vec![(*a, vec![g[0].clone(); k])]
            }
            Op::StackRows(a) => {
                let k = self.num_parts(*a);
                let parts = parallel::map_range(k, |p| Tensor::row_vector(g[0].row(p)));
                vec![(*a, parts)]
            }
            Op::Slice { src, r0, c0 } => {
                let sv = self.value(*src);
                vec![(*src, map(&|p| g[p].padded(sv[p].rows(), sv[p].cols(), *r0, *c0))?)]
            }
            Op::Pad { src, r0, c0 } => {
                let sv = self.value(*src);
                vec![(*src, map(&|p| g[p].block(*r0, *c0, sv[p].rows(), sv[p].cols()))?)]
            }
            Op::MaxOverSet { src, winners } => {
                let sv = self.value(*src);
                let parts = map(&|p| {
                    let cols = sv[p].cols();
                    let mut acc = Tensor::zeros(sv[p].rows(), cols);
                    for (e, &gv) in g[p].data().iter().enumerate() {
                        let (j, w) = (e % cols, winners[p][e]);
                        acc[(w, j)] += gv;
                    }
                    Ok(acc)
                })?;
                vec![(*src, parts)]
            }
            Op::PairwiseSqDist(a) => {
                let av = self.value(*a);
                vec![(*a, map(&|p| Ok(pairwise_sq_dist_vjp(&av[p], &g[p])))?)]
            }
            Op::TopEigen { src, vectors } => {
                let parts = map(&|p| {
                    let v = &vectors[p];
                    let gv = g[p].item();
                    Ok(Tensor::from_fn(v.rows(), v.rows(), |i, j| gv * v[(i, 0)] * v[(j, 0)]))
                })?;
                vec![(*src, parts)]
            }
        })
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn max_over_set_part(x: &Tensor, sets: &[Vec<usize>]) -> Result<(Tensor, Vec<usize>)> {
    let (n, c) = (x.rows(), x.cols());
    if sets.len() != n {
        return Err(Error::structural(format!(
            "max_over_set: {} neighbourhoods for {n} rows",
            sets.len()
        )));
    }
    let mut out = Tensor::zeros(n, c);
    let mut winners = vec![0; n * c];
    for (i, set) in sets.iter().enumerate() {
        let mut members = set.clone();
        members.sort_unstable();
        let Some(&first) = members.first() else {
            return Err(Error::structural(format!("max_over_set: empty set for row {i}")));
        };
        if let Some(&bad) = members.iter().find(|&&k| k >= n) {
            return Err(Error::structural(format!("max_over_set: index {bad} out of range {n}")));
        }
        for j in 0..c {
            let mut best = first;
            for &k in &members[1..] {
                if x[(k, j)] > x[(best, j)] {
                    best = k;
                }
            }
            out[(i, j)] = x[(best, j)];
            winners[i * c + j] = best;
        }
    }
    Ok((out, winners))
}

fn pairwise_sq_dist(z: &Tensor) -> Tensor {
    let n = z.rows();
    let mut s = Tensor::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = z.row(i).iter().zip(z.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            s[(i, j)] = d;
            s[(j, i)] = d;
        }
    }
    s
}

fn pairwise_sq_dist_vjp(z: &Tensor, g: &Tensor) -> Tensor {
    let (n, m) = (z.rows(), z.cols());
    let mut out = Tensor::zeros(n, m);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let h = 2.0 * (g[(i, j)] + g[(j, i)]);
            if h == 0.0 {
                continue;
            }
            for k in 0..m {
                out[(i, k)] += h * (z[(i, k)] - z[(j, k)]);
            }
        }
    }
    out
}

/// Dominant eigenpair of a symmetric PSD matrix. Stops once consecutive
/// Rayleigh quotients agree to `rel_tol`; returns the unit eigenvector as an
/// `n × 1` column.
pub fn power_iteration(a: &Tensor, opts: PowerIteration) -> Result<(f64, Tensor)> {
    let n = a.rows();
    if n != a.cols() || n == 0 {
        return Err(Error::structural(format!(
            "power iteration needs a non-empty square matrix, got {:?}",
            a.shape()
        )));
    }
    if n == 1 {
        return Ok((a[(0, 0)], Tensor::scalar(1.0)));
    }
    // Deterministic start with no special symmetry.
    let mut v = Tensor::from_fn(n, 1, |i, _| 1.0 + 0.1 * ((i * 7 + 3) % 11) as f64);
    normalize(&mut v);
    let mut previous = f64::NAN;
    let mut rayleigh = f64::NAN;
    for _ in 0..opts.max_iters {
        let w = a.matmul(&v)?;
        let next = v.data().iter().zip(w.data()).map(|(x, y)| x * y).sum::<f64>();
        let norm = w.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        previous = rayleigh;
        rayleigh = next;
        if norm == 0.0 {
            return Ok((0.0, v));
        }
        v = w.scale(1.0 / norm);
        if previous.is_finite() && (rayleigh - previous).abs() <= opts.rel_tol * rayleigh.abs().max(f64::MIN_POSITIVE) {
            // One more multiplication for the quotient of the returned vector.
            let w = a.matmul(&v)?;
            let lambda = v.data().iter().zip(w.data()).map(|(x, y)| x * y).sum::<f64>();
            return Ok((lambda, v));
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iters,
        previous,
        last: rayleigh,
    })
}

fn normalize(v: &mut Tensor) {
    let norm = v.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.data_mut() {
        *x /= norm;
    }
}
