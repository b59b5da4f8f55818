use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, DatasetManifest};
use crate::error::{Error, Result};
use crate::graph::{normalized_laplacian, Graph};
use crate::metric::{gaussian_similarity, mahalanobis_distances, similarity_to_adjacency};
use crate::spectral::{chebyshev_filter, ChebyshevCoeffs};
use crate::tensor::Tensor;
use crate::training::TaskType;

/// Scale of the dominant hidden direction; the others get [`MINOR_SCALE`].
pub const MAJOR_SCALE: f64 = 4.0;
pub const MINOR_SCALE: f64 = 0.2;
/// Width of the teacher's node readout.
const TEACHER_WIDTH: usize = 4;

/// The hidden function that generates labels.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenMetricTeacher {
    /// Ground-truth metric projection `W*` (`d × d`).
    pub w_star: Tensor,
    pub theta: ChebyshevCoeffs,
    /// `d × h` node readout.
    pub readout: Tensor,
    /// `h` graph-level weights.
    pub combine: Vec<f64>,
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    })
}

/// Gaussian-kernel graph on `‖(x_i − x_j) W‖` with unit bandwidth.
pub fn kernel_adjacency(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let dist = mahalanobis_distances(x, w)?;
    Ok(similarity_to_adjacency(&gaussian_similarity(&dist, 1.0)?, 0.0))
}

impl HiddenMetricTeacher {
    /// Draws the teacher for feature dimension `d`: a random rotation of
    /// `diag(MAJOR_SCALE, MINOR_SCALE, …)` plus a random readout.
    pub fn draw(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        let g = normal(&mut rng, d, d, 1.0);
        let q = nalgebra::DMatrix::from_row_slice(d, d, g.data()).qr().q();
        let w_star = Tensor::from_fn(d, d, |i, j| {
            q[(i, j)] * if j == 0 { MAJOR_SCALE } else { MINOR_SCALE }
        });
        let readout = normal(&mut rng, d, TEACHER_WIDTH, 1.0 / (d as f64).sqrt());
        let combine = (0..TEACHER_WIDTH).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self {
            w_star,
            theta: ChebyshevCoeffs::new(vec![1.0, 1.0]).expect("non-empty"),
            readout,
            combine,
        }
    }

    /// Unstandardized label of one sample.
    pub fn raw_label(&self, x: &Tensor) -> Result<f64> {
        let a = kernel_adjacency(x, &self.w_star)?;
        let l = normalized_laplacian(&a)?;
        // λ_max ≤ 2 for a normalized Laplacian: L̃ = L − I.
        let l_tilde = l.sub(&Tensor::identity(x.rows()))?;
        let h = chebyshev_filter(&l_tilde, x, &self.theta)?.matmul(&self.readout)?;
        let pooled = h.map(f64::tanh).col_sums();
        Ok(pooled.data().iter().zip(&self.combine).map(|(p, c)| p * c).sum())
    }
}

/// Regression dataset whose intrinsic graphs come from plain Euclidean
/// similarity while the labels depend on the graph under a hidden metric.
/// Labels are standardized to zero mean and unit variance.
pub fn synthesize_hidden_metric_dataset(
    n_samples: usize,
    n_nodes: (usize, usize),
    d: usize,
    seed: u64,
) -> Result<Dataset> {
    let (lo, hi) = n_nodes;
    if n_samples == 0 || d == 0 || lo == 0 || lo > hi {
        return Err(Error::parameter(
            "synth",
            format!("need n_samples ≥ 1, d ≥ 1 and 1 ≤ min ≤ max nodes; got {n_samples}, {d}, {lo}..={hi}"),
        ));
    }
    let teacher = HiddenMetricTeacher::draw(d, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let identity = Tensor::identity(d);
    let mut samples = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let n = rng.random_range(lo..=hi);
        let x = normal(&mut rng, n, d, 1.0);
        let a = kernel_adjacency(&x, &identity)?;
        let y = teacher.raw_label(&x)?;
        samples.push((format!("s{s:04}"), x, a, y));
    }
    let ys: Vec<f64> = samples.iter().map(|s| s.3).collect();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let graphs = samples
        .into_iter()
        .map(|(id, x, a, y)| Graph::new(id, x, a, Some(vec![(y - mean) / std]), None))
        .collect::<Result<Vec<_>>>()?;
    let max_degree = graphs.iter().map(Graph::max_degree).max();
    Ok(Dataset {
        manifest: DatasetManifest {
            name: format!("hidden-metric-{seed}"),
            task_type: TaskType::Regression,
            task_names: vec!["y".into()],
            feature_dim: d,
            num_samples: graphs.len(),
            max_degree,
            samples_file: "samples.jsonl".into(),
        },
        graphs,
    })
}
