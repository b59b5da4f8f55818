//! Learned Mahalanobis metric and residual Laplacian composition.
//!
//! For node features `x` (one row per node) and a projection `W_d`, the metric
//! `M = W_d W_dᵀ` gives distances `D(i,j) = ‖(x_i − x_j) W_d‖`. Distances go
//! through the kernel `exp(−D / 2σ²)`, are thresholded into an adjacency, and
//! the normalized Laplacian `F` of that adjacency is combined with the
//! intrinsic one as `L_e = Res + L = F + (1 − σ_mix) L`.
//!
//! These are the plain reference implementations; the SGC-LL layer rebuilds
//! the same chain on the tape.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::normalized_laplacian;
use crate::tensor::Tensor;

/// Trainable metric basis plus the fixed kernel settings of one SGC-LL layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    /// `d × m` projection.
    pub w_d: Tensor,
    /// Gaussian kernel bandwidth.
    pub gaussian_sigma: f64,
    /// Weight of the intrinsic Laplacian removed in the residual.
    pub mix_sigma: f64,
    /// Similarities below this are pruned from the learned adjacency.
    pub threshold: f64,
}

impl MetricParams {
    pub fn new(w_d: Tensor, gaussian_sigma: f64, mix_sigma: f64, threshold: f64) -> Result<Self> {
        let p = Self {
            w_d,
            gaussian_sigma,
            mix_sigma,
            threshold,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_d.cols() == 0 || self.w_d.rows() == 0 {
            return Err(Error::parameter("w_d", "projection needs at least one row and column"));
        }
        if !self.w_d.is_finite() {
            return Err(Error::parameter("w_d", "non-finite entry"));
        }
        if !self.gaussian_sigma.is_finite() || self.gaussian_sigma <= 0.0 {
            return Err(Error::parameter("gaussian_sigma", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mix_sigma) {
            return Err(Error::parameter("mix_sigma", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::parameter("threshold", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// `M = W_d W_dᵀ`.
    pub fn metric(&self) -> Tensor {
        metric_matrix(&self.w_d)
    }
}

/// Identity truncated to `d × m` plus Gaussian noise of the given std.
pub fn near_identity_projection<R: Rng + ?Sized>(d: usize, m: usize, noise_std: f64, rng: &mut R) -> Tensor {
    let normal = Normal::new(0.0, noise_std).expect("finite std");
    Tensor::from_fn(d, m, |i, j| {
        let base = if i == j { 1.0 } else { 0.0 };
        base + normal.sample(rng)
    })
}

pub fn metric_matrix(w_d: &Tensor) -> Tensor {
    w_d.matmul(&w_d.transpose()).expect("W Wᵀ is always conformable")
}

/// Pairwise Mahalanobis distances `‖(x_i − x_j) W_d‖`.
pub fn mahalanobis_distances(x: &Tensor, w_d: &Tensor) -> Result<Tensor> {
    if !x.is_finite() || !w_d.is_finite() {
        return Err(Error::numerical("mahalanobis_distances", "non-finite input"));
    }
    let z = x.matmul(w_d)?;
    let n = z.rows();
    let mut d = Tensor::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let sq: f64 = z.row(i).iter().zip(z.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = sq.max(0.0).sqrt();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// `exp(−D / 2σ²)` entrywise.
pub fn gaussian_similarity(distances: &Tensor, sigma: f64) -> Result<Tensor> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::parameter("gaussian_sigma", format!("must be positive, got {sigma}")));
    }
    let c = 1.0 / (2.0 * sigma * sigma);
    Ok(distances.map(|d| (-d * c).exp()))
}

/// Zeroes the diagonal and every entry below `threshold`.
pub fn similarity_to_adjacency(similarity: &Tensor, threshold: f64) -> Tensor {
    let n = similarity.rows();
    Tensor::from_fn(n, similarity.cols(), |i, j| {
        let s = similarity[(i, j)];
        if i == j || s < threshold {
            0.0
        } else {
            s
        }
    })
}

/// Every stage of the evolved-Laplacian computation for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolvedLaplacian {
    pub distances: Tensor,
    pub similarity: Tensor,
    pub adjacency: Tensor,
    /// Normalized Laplacian of the learned adjacency.
    pub learned: Tensor,
    /// `F − σ_mix L_orig`.
    pub residual: Tensor,
    /// `Res + L_orig = F + (1 − σ_mix) L_orig`.
    pub evolved: Tensor,
}

pub fn evolved_laplacian_stages(x: &Tensor, l_orig: &Tensor, params: &MetricParams) -> Result<EvolvedLaplacian> {
    let n = x.rows();
    if l_orig.shape() != [n, n] {
        return Err(Error::Shape {
            op: "evolved_laplacian",
            lhs: [n, n],
            rhs: l_orig.shape(),
        });
    }
    let distances = mahalanobis_distances(x, &params.w_d)?;
    let similarity = gaussian_similarity(&distances, params.gaussian_sigma)?;
    let adjacency = similarity_to_adjacency(&similarity, params.threshold);
    let learned = normalized_laplacian(&adjacency)?;
    let residual = learned.sub(&l_orig.scale(params.mix_sigma))?;
    // Same value as `residual + l_orig`, but exact when σ_mix = 1.
    let evolved = learned.add(&l_orig.scale(1.0 - params.mix_sigma))?;
    Ok(EvolvedLaplacian {
        distances,
        similarity,
        adjacency,
        learned,
        residual,
        evolved,
    })
}

/// `L_e = F + (1 − σ_mix) L_orig`, computed as `Res(L_orig, W_d) + L_orig`.
pub fn evolved_laplacian(x: &Tensor, l_orig: &Tensor, params: &MetricParams) -> Result<Tensor> {
    evolved_laplacian_stages(x, l_orig, params).map(|s| s.evolved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_projection_gives_euclidean_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 5, 3);
        let d = mahalanobis_distances(&x, &Tensor::identity(3)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let e: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!((d[(i, j)] - e).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn identical_rows_are_at_distance_zero() {
        let x = Tensor::from_rows(&[[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]]);
        let d = mahalanobis_distances(&x, &Tensor::from_rows(&[[0.3, 1.0], [2.0, -1.0]])).unwrap();
        assert_eq!(d[(0, 1)], 0.0);
    }

    #[test]
    fn one_dimensional_projection() {
        let x = Tensor::from_rows(&[[0.0], [3.0]]);
        let d = mahalanobis_distances(&x, &Tensor::scalar(2.0)).unwrap();
        assert_eq!(d[(0, 1)], 6.0);
    }

    #[test]
    fn non_finite_features_are_rejected() {
        let x = Tensor::from_rows(&[[f64::NAN], [3.0]]);
        assert!(mahalanobis_distances(&x, &Tensor::scalar(1.0)).unwrap_err().is_numerical());
    }

    #[test]
    fn gaussian_kernel_values() {
        assert_eq!(gaussian_similarity(&Tensor::zeros(3, 3), 0.7).unwrap(), Tensor::filled(3, 3, 1.0));
        let sigma: f64 = 0.8;
        let d = Tensor::filled(1, 1, 2.0 * sigma * sigma);
        assert!((gaussian_similarity(&d, sigma).unwrap().item() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(matches!(gaussian_similarity(&d, 0.0), Err(Error::Parameter { .. })));
    }

    #[test]
    fn gaussian_of_random_distances_is_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 7, 3);
        let w = random(&mut rng, 3, 2);
        let s = gaussian_similarity(&mahalanobis_distances(&x, &w).unwrap(), 1.3).unwrap();
        assert_eq!(s.asymmetry(), 0.0);
        assert!(s.data().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn thresholding() {
        let s = Tensor::from_rows(&[[1.0, 0.4, 0.9], [0.4, 1.0, 0.2], [0.9, 0.2, 1.0]]);
        let a0 = similarity_to_adjacency(&s, 0.0);
        assert_eq!(a0, Tensor::from_rows(&[[0.0, 0.4, 0.9], [0.4, 0.0, 0.2], [0.9, 0.2, 0.0]]));
        let ones = similarity_to_adjacency(&Tensor::filled(3, 3, 1.0), 1.0 - 1e-9);
        assert_eq!(ones, Tensor::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 }));
        let empty = similarity_to_adjacency(&s, 0.95);
        assert_eq!(empty, Tensor::zeros(3, 3));
        assert_eq!(normalized_laplacian(&empty).unwrap(), Tensor::identity(3));
    }

    #[test]
    fn full_mix_returns_learned_laplacian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&mut rng, 5, 3);
        let a = similarity_to_adjacency(&gaussian_similarity(&mahalanobis_distances(&x, &Tensor::identity(3)).unwrap(), 1.0).unwrap(), 0.0);
        let l_orig = normalized_laplacian(&a).unwrap();
        let w = random(&mut rng, 3, 3);
        let p = MetricParams::new(w, 1.0, 1.0, 0.0).unwrap();
        let st = evolved_laplacian_stages(&x, &l_orig, &p).unwrap();
        assert_eq!(st.evolved, st.learned);

        // Identity projection reproduces the intrinsic graph: zero residual.
        let fixed = MetricParams::new(Tensor::identity(3), 1.0, 1.0, 0.0).unwrap();
        let st = evolved_laplacian_stages(&x, &l_orig, &fixed).unwrap();
        assert_eq!(st.residual.max_abs(), 0.0);
        assert_eq!(st.evolved, l_orig);
    }

    #[test]
    fn zero_mix_adds_both_laplacians() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random(&mut rng, 4, 2);
        let l_orig = normalized_laplacian(&Tensor::from_rows(&[
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
        ]))
        .unwrap();
        let p = MetricParams::new(random(&mut rng, 2, 2), 0.9, 0.0, 0.0).unwrap();
        let le = evolved_laplacian(&x, &l_orig, &p).unwrap();
        let f = normalized_laplacian(&similarity_to_adjacency(
            &gaussian_similarity(&mahalanobis_distances(&x, &p.w_d).unwrap(), 0.9).unwrap(),
            0.0,
        ))
        .unwrap();
        assert!(le.max_abs_diff(&f.add(&l_orig).unwrap()) <= 1e-15);
        assert!(le.asymmetry() <= 1e-15);
    }

    #[test]
    fn params_are_validated() {
        assert!(MetricParams::new(Tensor::identity(2), 0.0, 1.0, 0.0).is_err());
        assert!(MetricParams::new(Tensor::identity(2), 1.0, 1.5, 0.0).is_err());
        assert!(MetricParams::new(Tensor::identity(2), 1.0, 1.0, 1.0).is_err());
        assert!(MetricParams::new(Tensor::zeros(2, 0), 1.0, 1.0, 0.0).is_err());
    }
}
