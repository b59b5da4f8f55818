//! K-hop spectral filtering with Chebyshev polynomials.
//!
//! A filter `g_θ(L) = Σ_k θ_k T_k(L̃)` with `L̃ = (2/λ_max) L − I` is applied to
//! a node signal by the three-term recursion
//! `T_k(L̃)x = 2 L̃ T_{k−1}(L̃)x − T_{k−2}(L̃)x`, carrying only two `N × d`
//! panels. [`spectral_oracle`] evaluates the same filter through a dense
//! eigendecomposition and exists to cross-check the recursion.

use serde::{Deserialize, Serialize};

use crate::autodiff::{power_iteration, PowerIteration};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Filter coefficients `θ_0 … θ_{K−1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevCoeffs(Vec<f64>);

impl ChebyshevCoeffs {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::parameter("theta", "need at least one coefficient"));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::parameter("theta", "non-finite coefficient"));
        }
        Ok(Self(theta))
    }

    /// Number of coefficients `K`.
    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Evaluates `Σ θ_k T_k(t)` at a scalar.
    pub fn eval_scalar(&self, t: f64) -> f64 {
        let (mut prev, mut cur) = (1.0, t);
        let mut acc = self.0[0];
        for (k, &theta) in self.0.iter().enumerate().skip(1) {
            if k > 1 {
                let next = 2.0 * t * cur - prev;
                prev = cur;
                cur = next;
            }
            acc += theta * cur;
        }
        acc
    }
}

/// `(2/λ_max) L − I`.
pub fn scale_laplacian(l: &Tensor, lambda_max: f64) -> Result<Tensor> {
    if !lambda_max.is_finite() || lambda_max <= 0.0 {
        return Err(Error::parameter("lambda_max", format!("must be positive, got {lambda_max}")));
    }
    if l.rows() != l.cols() {
        return Err(Error::structural(format!("Laplacian must be square, got {:?}", l.shape())));
    }
    let c = 2.0 / lambda_max;
    let n = l.rows();
    Ok(Tensor::from_fn(n, n, |i, j| c * l[(i, j)] - if i == j { 1.0 } else { 0.0 }))
}

/// `Σ θ_k T_k(L̃) x` by the Chebyshev recursion.
pub fn chebyshev_filter(l_tilde: &Tensor, x: &Tensor, theta: &ChebyshevCoeffs) -> Result<Tensor> {
    let n = l_tilde.rows();
    if l_tilde.cols() != n || x.rows() != n {
        return Err(Error::Shape {
            op: "chebyshev_filter",
            lhs: l_tilde.shape(),
            rhs: x.shape(),
        });
    }
    let coeffs = theta.as_slice();
    let mut out = x.scale(coeffs[0]);
    if coeffs.len() == 1 {
        return Ok(out);
    }
    let mut prev = x.clone();
    let mut cur = l_tilde.matmul(x)?;
    out.add_assign(&cur.scale(coeffs[1]))?;
    for &c in &coeffs[2..] {
        let next = l_tilde.matmul(&cur)?.scale(2.0).sub(&prev)?;
        out.add_assign(&next.scale(c))?;
        prev = std::mem::replace(&mut cur, next);
    }
    Ok(out)
}

/// Reference evaluation `U g_θ(Λ̃) Uᵀ x` via a dense eigendecomposition.
pub fn spectral_oracle(l: &Tensor, x: &Tensor, theta: &ChebyshevCoeffs, lambda_max: f64) -> Result<Tensor> {
    if l.rows() != l.cols() || x.rows() != l.rows() {
        return Err(Error::Shape {
            op: "spectral_oracle",
            lhs: l.shape(),
            rhs: x.shape(),
        });
    }
    if lambda_max.is_nan() || lambda_max <= 0.0 {
        return Err(Error::parameter("lambda_max", format!("must be positive, got {lambda_max}")));
    }
    let eig = nalgebra::SymmetricEigen::try_new(l.to_nalgebra(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numerical("spectral_oracle", "eigendecomposition did not converge"))?;
    let gains = eig
        .eigenvalues
        .map(|lambda| theta.eval_scalar(2.0 * lambda / lambda_max - 1.0));
    let u = &eig.eigenvectors;
    let spectrum = u.transpose() * x.to_nalgebra();
    let filtered = nalgebra::DMatrix::from_fn(spectrum.nrows(), spectrum.ncols(), |i, j| gains[i] * spectrum[(i, j)]);
    Ok(Tensor::from_nalgebra(&(u * filtered)))
}

/// How `λ_max` is obtained when rescaling a Laplacian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum LambdaMax {
    /// A known spectral upper bound (2 for normalized Laplacians).
    Fixed { value: f64 },
    /// Power iteration to the given relative tolerance.
    Exact { rel_tol: f64, max_iters: usize },
}

impl LambdaMax {
    pub const NORMALIZED: LambdaMax = LambdaMax::Fixed { value: 2.0 };

    pub fn exact() -> Self {
        let d = PowerIteration::default();
        LambdaMax::Exact {
            rel_tol: d.rel_tol,
            max_iters: d.max_iters,
        }
    }
}

pub fn estimate_lambda_max(l: &Tensor, mode: LambdaMax) -> Result<f64> {
    match mode {
        LambdaMax::Fixed { value } => Ok(value),
        LambdaMax::Exact { rel_tol, max_iters } => {
            power_iteration(l, PowerIteration { rel_tol, max_iters }).map(|(lambda, _)| lambda)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::normalized_laplacian;
    use crate::tensor::symmetric_eigenvalues;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_laplacian(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
        let mut a = Tensor::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_bool(0.5) {
                    let w = rng.random_range(0.1..2.0);
                    a[(i, j)] = w;
                    a[(j, i)] = w;
                }
            }
        }
        normalized_laplacian(&a).unwrap()
    }

    #[test]
    fn scaling_identity_and_edge() {
        assert_eq!(scale_laplacian(&Tensor::identity(3), 2.0).unwrap(), Tensor::zeros(3, 3));
        let l = Tensor::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]);
        assert_eq!(
            scale_laplacian(&l, 2.0).unwrap(),
            Tensor::from_rows(&[[0.0, -1.0], [-1.0, 0.0]])
        );
        assert!(matches!(scale_laplacian(&l, 0.0), Err(Error::Parameter { .. })));
    }

    #[test]
    fn scaled_spectrum_is_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = random_laplacian(&mut rng, 6);
        let top = *symmetric_eigenvalues(&l).last().unwrap();
        let eig = symmetric_eigenvalues(&scale_laplacian(&l, top).unwrap());
        assert!(eig.iter().all(|&v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(&v)), "{eig:?}");
    }

    #[test]
    fn low_order_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lt = scale_laplacian(&random_laplacian(&mut rng, 5), 2.0).unwrap();
        let x = Tensor::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let id = chebyshev_filter(&lt, &x, &ChebyshevCoeffs::new(vec![1.0]).unwrap()).unwrap();
        assert_eq!(id, x);
        let first = chebyshev_filter(&lt, &x, &ChebyshevCoeffs::new(vec![0.0, 1.0]).unwrap()).unwrap();
        assert!(first.max_abs_diff(&lt.matmul(&x).unwrap()) == 0.0);
    }

    #[test]
    fn recursion_matches_oracle_on_random_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = random_laplacian(&mut rng, 8);
        let x = Tensor::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
        let theta = ChebyshevCoeffs::new((0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let fast = chebyshev_filter(&scale_laplacian(&l, 2.0).unwrap(), &x, &theta).unwrap();
        let slow = spectral_oracle(&l, &x, &theta, 2.0).unwrap();
        assert!(fast.max_abs_diff(&slow) <= 1e-10 * slow.max_abs().max(1.0));
    }

    #[test]
    fn oracle_on_identity_is_a_scalar_multiple() {
        let theta = ChebyshevCoeffs::new(vec![0.3, -0.7, 1.1]).unwrap();
        let x = Tensor::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]]);
        let out = spectral_oracle(&Tensor::identity(3), &x, &theta, 2.0).unwrap();
        let gain = theta.eval_scalar(0.0);
        assert!(out.max_abs_diff(&x.scale(gain)) <= 1e-14);
        let unit = ChebyshevCoeffs::new(vec![1.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = random_laplacian(&mut rng, 3);
        assert!(spectral_oracle(&l, &x, &unit, 2.0).unwrap().max_abs_diff(&x) <= 1e-14);
    }

    #[test]
    fn lambda_max_modes() {
        let edge = normalized_laplacian(&Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]])).unwrap();
        assert!((estimate_lambda_max(&edge, LambdaMax::exact()).unwrap() - 2.0).abs() <= 1e-8);
        assert!((estimate_lambda_max(&Tensor::identity(5), LambdaMax::exact()).unwrap() - 1.0).abs() <= 1e-8);
        assert_eq!(estimate_lambda_max(&Tensor::identity(5), LambdaMax::NORMALIZED).unwrap(), 2.0);
    }
}
