//! Graph samples, padded batches and the normalized Laplacian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Tolerance for adjacency symmetry.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// One sample: node features, intrinsic adjacency and optional masked labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    id: String,
    node_features: Tensor,
    adjacency: Tensor,
    labels: Option<Vec<f64>>,
    label_mask: Vec<bool>,
}

impl Graph {
    /// Validates and builds a graph. With `labels` given and `label_mask`
    /// omitted, every label is treated as observed.
    pub fn new(
        id: impl Into<String>,
        node_features: Tensor,
        adjacency: Tensor,
        labels: Option<Vec<f64>>,
        label_mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        let id = id.into();
        let ctx = |msg: String| Error::structural(format!("graph `{id}`: {msg}"));
        let n = node_features.rows();
        if n == 0 {
            return Err(ctx("graph needs at least one node".into()));
        }
        if node_features.cols() == 0 {
            return Err(ctx("node features need at least one column".into()));
        }
        if !node_features.is_finite() {
            return Err(ctx("non-finite node feature".into()));
        }
        if adjacency.shape() != [n, n] {
            return Err(ctx(format!(
                "adjacency shape {:?} does not match {n} nodes",
                adjacency.shape()
            )));
        }
        validate_adjacency(&adjacency).map_err(|e| ctx(e.to_string()))?;
        let label_mask = match (&labels, label_mask) {
            (None, None) => Vec::new(),
            (None, Some(m)) if m.is_empty() => m,
            (None, Some(_)) => return Err(ctx("label mask given without labels".into())),
            (Some(l), None) => vec![true; l.len()],
            (Some(l), Some(m)) => {
                if m.len() != l.len() {
                    return Err(ctx(format!(
                        "label mask has {} entries for {} labels",
                        m.len(),
                        l.len()
                    )));
                }
                m
            }
        };
        if let Some(l) = &labels {
            if l.iter().zip(&label_mask).any(|(v, &m)| m && !v.is_finite()) {
                return Err(ctx("non-finite observed label".into()));
            }
        }
        Ok(Self {
            id,
            node_features,
            adjacency,
            labels,
            label_mask,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn num_nodes(&self) -> usize {
        self.node_features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.cols()
    }

    pub fn num_tasks(&self) -> usize {
        self.label_mask.len()
    }

    pub fn node_features(&self) -> &Tensor {
        &self.node_features
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    pub fn label_mask(&self) -> &[bool] {
        &self.label_mask
    }

    /// Intrinsic normalized Laplacian of this sample.
    pub fn laplacian(&self) -> Tensor {
        normalized_laplacian(&self.adjacency).expect("adjacency validated at construction")
    }

    /// Number of neighbours of the busiest node.
    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes())
            .map(|i| self.adjacency.row(i).iter().filter(|&&w| w > 0.0).count())
            .max()
            .unwrap_or(0)
    }

    /// Closed neighbourhood `{i} ∪ N(i)` of every node, ascending.
    pub fn closed_neighbourhoods(&self) -> Vec<Vec<usize>> {
        closed_neighbourhoods(&self.adjacency)
    }

    /// Relabels nodes so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::structural("not a permutation of the node set"));
        }
        Graph::new(
            self.id.clone(),
            self.node_features.permute_rows(perm),
            self.adjacency.permute_symmetric(perm),
            self.labels.clone(),
            Some(self.label_mask.clone()),
        )
    }

    /// Same graph with different labels (used when building synthetic sets).
    pub fn with_labels(&self, labels: Vec<f64>, mask: Vec<bool>) -> Result<Graph> {
        Graph::new(
            self.id.clone(),
            self.node_features.clone(),
            self.adjacency.clone(),
            Some(labels),
            Some(mask),
        )
    }
}

fn validate_adjacency(a: &Tensor) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::structural(format!(
            "adjacency must be square, got {:?}",
            a.shape()
        )));
    }
    if let Some(v) = a.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::structural(format!("non-finite adjacency entry {v}")));
    }
    if let Some(v) = a.data().iter().find(|&&v| v < 0.0) {
        return Err(Error::structural(format!("negative adjacency entry {v}")));
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::structural(format!(
            "adjacency is not symmetric (max asymmetry {asym:e})"
        )));
    }
    if let Some(i) = (0..a.rows()).find(|&i| a[(i, i)] != 0.0) {
        return Err(Error::structural(format!("non-zero diagonal entry at node {i}")));
    }
    Ok(())
}

/// Row sums of the adjacency.
pub fn degree_vector(adjacency: &Tensor) -> Vec<f64> {
    (0..adjacency.rows())
        .map(|i| adjacency.row(i).iter().sum())
        .collect()
}

/// `I − D^{−1/2} A D^{−1/2}`. Zero-degree nodes get `D^{−1/2} = 0`, so their
/// row and column are those of the identity.
pub fn normalized_laplacian(adjacency: &Tensor) -> Result<Tensor> {
    validate_adjacency(adjacency)?;
    let inv_sqrt: Vec<f64> = degree_vector(adjacency)
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let n = adjacency.rows();
    Ok(Tensor::from_fn(n, n, |i, j| {
        let off = inv_sqrt[i] * adjacency[(i, j)] * inv_sqrt[j];
        if i == j {
            1.0 - off
        } else {
            -off
        }
    }))
}

pub fn closed_neighbourhoods(adjacency: &Tensor) -> Vec<Vec<usize>> {
    (0..adjacency.rows())
        .map(|i| {
            (0..adjacency.cols())
                .filter(|&j| j == i || adjacency[(i, j)] > 0.0)
                .collect()
        })
        .collect()
}

/// Zero-padded stack of graphs with per-sample node counts and masks.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    ids: Vec<String>,
    n_max: usize,
    feature_dim: usize,
    /// `B` tensors of shape `n_max × d`.
    features: Vec<Tensor>,
    /// `B` tensors of shape `n_max × n_max`.
    adjacencies: Vec<Tensor>,
    node_counts: Vec<usize>,
    node_mask: Vec<Vec<bool>>,
    /// `B × T`; masked entries are zero.
    labels: Tensor,
    /// `B × T` of 0/1.
    label_mask: Tensor,
}

/// Pads `samples` to `n_max` nodes each.
pub fn batch_graphs(samples: &[Graph], n_max: usize) -> Result<GraphBatch> {
    let first = samples.first().ok_or(Error::EmptyBatch)?;
    let (d, t) = (first.feature_dim(), first.num_tasks());
    let b = samples.len();
    let mut labels = Tensor::zeros(b, t);
    let mut label_mask = Tensor::zeros(b, t);
    let mut batch = GraphBatch {
        ids: Vec::with_capacity(b),
        n_max,
        feature_dim: d,
        features: Vec::with_capacity(b),
        adjacencies: Vec::with_capacity(b),
        node_counts: Vec::with_capacity(b),
        node_mask: Vec::with_capacity(b),
        labels: Tensor::zeros(0, 0),
        label_mask: Tensor::zeros(0, 0),
    };
    for (row, g) in samples.iter().enumerate() {
        let n = g.num_nodes();
        if n > n_max {
            return Err(Error::Capacity {
                id: g.id().to_string(),
                nodes: n,
                capacity: n_max,
            });
        }
        if g.feature_dim() != d || g.num_tasks() != t {
            return Err(Error::structural(format!(
                "sample `{}` has feature dim {} and {} tasks, batch expects {d} and {t}",
                g.id(),
                g.feature_dim(),
                g.num_tasks()
            )));
        }
        batch.ids.push(g.id().to_string());
        batch.features.push(g.node_features().padded(n_max, d, 0, 0)?);
        batch.adjacencies.push(g.adjacency().padded(n_max, n_max, 0, 0)?);
        batch.node_counts.push(n);
        batch.node_mask.push((0..n_max).map(|i| i < n).collect());
        if let Some(l) = g.labels() {
            for (k, (&v, &m)) in l.iter().zip(g.label_mask()).enumerate() {
                if m {
                    labels[(row, k)] = v;
                    label_mask[(row, k)] = 1.0;
                }
            }
        }
    }
    batch.labels = labels;
    batch.label_mask = label_mask;
    Ok(batch)
}

impl GraphBatch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_tasks(&self) -> usize {
        self.labels.cols()
    }

    pub fn node_counts(&self) -> &[usize] {
        &self.node_counts
    }

    pub fn node_mask(&self) -> &[Vec<bool>] {
        &self.node_mask
    }

    pub fn padded_features(&self) -> &[Tensor] {
        &self.features
    }

    pub fn padded_adjacencies(&self) -> &[Tensor] {
        &self.adjacencies
    }

    pub fn labels(&self) -> &Tensor {
        &self.labels
    }

    pub fn label_mask(&self) -> &Tensor {
        &self.label_mask
    }

    /// Features of sample `b` restricted to its valid nodes.
    pub fn sample_features(&self, b: usize) -> Tensor {
        self.features[b]
            .block(0, 0, self.node_counts[b], self.feature_dim)
            .expect("node count within capacity")
    }

    /// Adjacency of sample `b` restricted to its valid nodes.
    pub fn sample_adjacency(&self, b: usize) -> Tensor {
        let n = self.node_counts[b];
        self.adjacencies[b].block(0, 0, n, n).expect("node count within capacity")
    }

    /// Per-sample valid-node feature matrices.
    pub fn unpadded_features(&self) -> Vec<Tensor> {
        (0..self.len()).map(|b| self.sample_features(b)).collect()
    }

    /// A batch with the same graphs and new node features (given unpadded,
    /// one `n_b × f` tensor per sample).
    pub fn with_features(&self, per_sample: &[Tensor]) -> Result<GraphBatch> {
        if per_sample.len() != self.len() {
            return Err(Error::structural(format!(
                "{} feature blocks for a batch of {}",
                per_sample.len(),
                self.len()
            )));
        }
        let f = per_sample[0].cols();
        let mut features = Vec::with_capacity(self.len());
        for (b, x) in per_sample.iter().enumerate() {
            if x.rows() != self.node_counts[b] || x.cols() != f {
                return Err(Error::Shape {
                    op: "with_features",
                    lhs: [self.node_counts[b], f],
                    rhs: x.shape(),
                });
            }
            features.push(x.padded(self.n_max, f, 0, 0)?);
        }
        Ok(GraphBatch {
            features,
            feature_dim: f,
            ..self.clone()
        })
    }

    /// Per-sample closed neighbourhoods of valid nodes.
    pub fn closed_neighbourhoods(&self) -> Vec<Vec<Vec<usize>>> {
        (0..self.len())
            .map(|b| closed_neighbourhoods(&self.sample_adjacency(b)))
            .collect()
    }
}

/// Intrinsic Laplacians of a batch plus the evolved ones produced by each
/// SGC-LL layer during a forward pass. All matrices cover valid nodes only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LaplacianSet {
    pub intrinsic: Vec<Tensor>,
    /// `evolved[layer][sample]`.
    pub evolved: Vec<Vec<Tensor>>,
}

impl LaplacianSet {
    pub fn for_batch(batch: &GraphBatch) -> Result<Self> {
        let intrinsic = (0..batch.len())
            .map(|b| normalized_laplacian(&batch.sample_adjacency(b)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            intrinsic,
            evolved: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::symmetric_eigenvalues;

    fn path3() -> Tensor {
        Tensor::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    }

    fn graph(id: &str, n: usize, d: usize) -> Graph {
        let x = Tensor::from_fn(n, d, |i, j| (i * d + j) as f64 + 0.5);
        let a = Tensor::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 });
        Graph::new(id, x, a, Some(vec![1.0]), None).unwrap()
    }

    #[test]
    fn laplacian_of_single_edge() {
        let a = Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(
            normalized_laplacian(&a).unwrap(),
            Tensor::from_rows(&[[1.0, -1.0], [-1.0, 1.0]])
        );
    }

    #[test]
    fn isolated_nodes_give_identity() {
        assert_eq!(normalized_laplacian(&Tensor::zeros(3, 3)).unwrap(), Tensor::identity(3));
    }

    #[test]
    fn path_graph_spectrum() {
        let eig = symmetric_eigenvalues(&normalized_laplacian(&path3()).unwrap());
        for (got, want) in eig.iter().zip([0.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12, "{eig:?}");
        }
    }

    #[test]
    fn laplacian_rejects_bad_adjacency() {
        let asym = Tensor::from_rows(&[[0.0, 1.0], [0.5, 0.0]]);
        assert!(matches!(normalized_laplacian(&asym), Err(Error::Structural(_))));
        let neg = Tensor::from_rows(&[[0.0, -1.0], [-1.0, 0.0]]);
        assert!(matches!(normalized_laplacian(&neg), Err(Error::Structural(_))));
    }

    #[test]
    fn degrees() {
        assert_eq!(degree_vector(&Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]])), vec![1.0, 1.0]);
        assert_eq!(degree_vector(&Tensor::zeros(3, 3)), vec![0.0; 3]);
        let tri = Tensor::from_rows(&[[0.0, 0.5, 0.5], [0.5, 0.0, 1.0], [0.5, 1.0, 0.0]]);
        assert_eq!(degree_vector(&tri), vec![1.0, 1.5, 1.5]);
    }

    #[test]
    fn graph_invariants_are_enforced() {
        let x = Tensor::zeros(2, 1);
        let loop_adj = Tensor::from_rows(&[[1.0, 0.0], [0.0, 0.0]]);
        assert!(Graph::new("g", x.clone(), loop_adj, None, None).is_err());
        let ok = Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert!(Graph::new("g", x.clone(), ok.clone(), Some(vec![1.0]), Some(vec![true, false])).is_err());
        assert!(Graph::new("g", Tensor::zeros(0, 1), Tensor::zeros(0, 0), None, None).is_err());
        assert!(Graph::new("g", Tensor::zeros(2, 0), ok, None, None).is_err());
    }

    #[test]
    fn batching_pads_with_zeros() {
        let g = graph("a", 2, 3);
        let batch = batch_graphs(&[g], 4).unwrap();
        let f = &batch.padded_features()[0];
        assert!(f.row(2).iter().chain(f.row(3)).all(|&v| v == 0.0));
        assert_eq!(batch.node_mask()[0], vec![true, true, false, false]);
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert_eq!(batch_graphs(&[], 4).unwrap_err(), Error::EmptyBatch);
    }

    #[test]
    fn oversized_sample_names_itself() {
        let err = batch_graphs(&[graph("big", 6, 2)], 5).unwrap_err();
        assert_eq!(
            err,
            Error::Capacity {
                id: "big".into(),
                nodes: 6,
                capacity: 5
            }
        );
    }

    #[test]
    fn slicing_recovers_each_sample() {
        let (a, b) = (graph("a", 3, 2), graph("b", 5, 2));
        let batch = batch_graphs(&[a.clone(), b.clone()], 5).unwrap();
        assert_eq!(&batch.sample_features(0), a.node_features());
        assert_eq!(&batch.sample_adjacency(0), a.adjacency());
        assert_eq!(&batch.sample_features(1), b.node_features());
        assert_eq!(batch.node_counts(), &[3, 5]);
    }
}
