use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Activation, BatchContext};
use crate::autodiff::{ParamStore, PowerIteration, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{GraphBatch, LaplacianSet};
use crate::metric::{evolved_laplacian_stages, near_identity_projection, MetricParams};
use crate::spectral::{chebyshev_filter, estimate_lambda_max, scale_laplacian, ChebyshevCoeffs, LambdaMax};
use crate::tensor::Tensor;

/// How an SGC-LL layer bounds the spectrum of its evolved Laplacian.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum LambdaPolicy {
    /// `λ_max(F + (1 − σ)L) ≤ 2 + 2(1 − σ)`: both terms are normalized
    /// Laplacians, so this bound holds for every sample and costs nothing.
    #[default]
    CompositionBound,
    /// Dominant eigenvalue by power iteration, differentiated through `v vᵀ`.
    PowerIteration { rel_tol: f64, max_iters: usize },
}

/// Spectral graph convolution with a learned, per-sample Laplacian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgcLayer {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
    /// Number of Chebyshev coefficients `K`.
    pub order: usize,
    /// Columns of the metric projection `W_d`.
    pub metric_dim: usize,
    pub gaussian_sigma: f64,
    pub mix_sigma: f64,
    pub threshold: f64,
    pub activation: Activation,
    pub lambda_max: LambdaPolicy,
}

/// Current parameter values of one SGC-LL layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SgcLayerParams {
    pub theta: ChebyshevCoeffs,
    pub w_k: Tensor,
    pub b_k: Tensor,
    pub metric: MetricParams,
    pub activation: Activation,
}

impl SgcLayerParams {
    /// `K + f_in·f_out + f_out + d·m`.
    pub fn num_scalars(&self) -> usize {
        self.theta.order() + self.w_k.len() + self.b_k.len() + self.metric.w_d.len()
    }
}

/// Tape handle for the layer output plus the per-sample matrices worth
/// inspecting.
#[derive(Clone, Debug)]
pub struct SgcOutput {
    pub features: Var,
    /// Gaussian similarity before thresholding (unit diagonal).
    pub similarity: Vec<Tensor>,
    /// Evolved Laplacian `L_e` per sample.
    pub evolved: Vec<Tensor>,
}

impl SgcLayer {
    pub fn theta_name(&self) -> String {
        format!("{}.theta", self.name)
    }

    pub fn w_k_name(&self) -> String {
        format!("{}.w_k", self.name)
    }

    pub fn b_k_name(&self) -> String {
        format!("{}.b_k", self.name)
    }

    pub fn w_d_name(&self) -> String {
        format!("{}.w_d", self.name)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::parameter(format!("{}.{field}", self.name), why));
        if self.order == 0 {
            return bad("order", "K must be at least 1");
        }
        if self.in_features == 0 || self.out_features == 0 || self.metric_dim == 0 {
            return bad("features", "dimensions must be positive");
        }
        MetricParams {
            w_d: Tensor::zeros(self.in_features, self.metric_dim),
            gaussian_sigma: self.gaussian_sigma,
            mix_sigma: self.mix_sigma,
            threshold: self.threshold,
        }
        .validate()
        .map_err(|e| Error::parameter(self.name.clone(), e.to_string()))?;
        Ok(())
    }

    /// Registers the layer's parameters. `W_d` starts at the truncated
    /// identity plus noise of std `init_noise`.
    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, init_noise: f64, rng: &mut R) -> Result<()> {
        let normal = Normal::new(0.0, 0.3).expect("finite std");
        let theta = Tensor::from_fn(1, self.order, |_, k| if k == 0 { 1.0 } else { normal.sample(rng) });
        store.insert(self.theta_name(), theta)?;
        store.insert(self.w_k_name(), super::glorot(self.in_features, self.out_features, rng))?;
        store.insert(self.b_k_name(), Tensor::zeros(1, self.out_features))?;
        store.insert(
            self.w_d_name(),
            near_identity_projection(self.in_features, self.metric_dim, init_noise, rng),
        )?;
        Ok(())
    }

    pub fn params(&self, store: &ParamStore) -> Result<SgcLayerParams> {
        Ok(SgcLayerParams {
            theta: ChebyshevCoeffs::new(store.value(&self.theta_name())?.data().to_vec())?,
            w_k: store.value(&self.w_k_name())?.clone(),
            b_k: store.value(&self.b_k_name())?.clone(),
            metric: MetricParams::new(
                store.value(&self.w_d_name())?.clone(),
                self.gaussian_sigma,
                self.mix_sigma,
                self.threshold,
            )?,
            activation: self.activation,
        })
    }

    fn lambda_bound(&self) -> f64 {
        2.0 + 2.0 * (1.0 - self.mix_sigma)
    }

    /// Records the layer on `tape`. `x` carries one `n_b × in_features` part
    /// per sample.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, ctx: &BatchContext, x: Var) -> Result<SgcOutput> {
        if let Some((b, p)) = tape
            .value(x)
            .iter()
            .enumerate()
            .find(|(b, p)| p.cols() != self.in_features || p.rows() != ctx.node_counts[*b])
        {
            return Err(Error::structural(format!(
                "layer `{}` expects {} input features, sample {b} has shape {:?}",
                self.name,
                self.in_features,
                p.shape()
            )));
        }

        let w_d = tape.param(store, &self.w_d_name())?;
        let theta = tape.param(store, &self.theta_name())?;
        let w_k = tape.param(store, &self.w_k_name())?;
        let b_k = tape.param(store, &self.b_k_name())?;
        let eye = tape.constant_parts(ctx.identities())?;

        // Learned graph: Mahalanobis distances -> Gaussian kernel -> threshold.
        let z = tape.matmul(x, w_d)?;
        let sq = tape.pairwise_sq_dist(z)?;
        let dist = tape.sqrt(sq)?;
        let scaled = tape.scale(dist, -1.0 / (2.0 * self.gaussian_sigma * self.gaussian_sigma))?;
        let similarity = tape.exp(scaled)?;
        let masks: Vec<Tensor> = tape
            .value(similarity)
            .iter()
            .map(|s| {
                Tensor::from_fn(s.rows(), s.cols(), |i, j| {
                    if i != j && s[(i, j)] >= self.threshold {
                        1.0
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        let mask = tape.constant_parts(masks)?;
        let adjacency = tape.mul(similarity, mask)?;

        // F = I - D^{-1/2} A D^{-1/2}, zero-degree rows keep the identity.
        let degree = tape.sum_rows(adjacency)?;
        let d_inv = tape.inv_sqrt(degree)?;
        let d_inv_t = tape.transpose(d_inv)?;
        let normalized = tape.mul(adjacency, d_inv)?;
        let normalized = tape.mul(normalized, d_inv_t)?;
        let learned = tape.sub(eye, normalized)?;

        let evolved = if self.mix_sigma == 1.0 {
            learned
        } else {
            let keep: Vec<Tensor> = ctx.intrinsic.iter().map(|l| l.scale(1.0 - self.mix_sigma)).collect();
            let keep = tape.constant_parts(keep)?;
            tape.add(learned, keep)?
        };

        let l_tilde = match self.lambda_max {
            LambdaPolicy::CompositionBound => {
                let s = tape.scale(evolved, 2.0 / self.lambda_bound())?;
                tape.sub(s, eye)?
            }
            LambdaPolicy::PowerIteration { rel_tol, max_iters } => {
                let lambda = tape.top_eigenvalue(evolved, PowerIteration { rel_tol, max_iters })?;
                let inv = tape.recip(lambda)?;
                let factor = tape.scale(inv, 2.0)?;
                let s = tape.mul(evolved, factor)?;
                tape.sub(s, eye)?
            }
        };

        // Chebyshev recursion on two panels.
        let coeff = |tape: &mut Tape, k: usize| tape.slice(theta, 0, k, 1, 1);
        let c0 = coeff(tape, 0)?;
        let mut filtered = tape.mul(x, c0)?;
        if self.order > 1 {
            let mut prev = x;
            let mut cur = tape.matmul(l_tilde, x)?;
            let c1 = coeff(tape, 1)?;
            let term = tape.mul(cur, c1)?;
            filtered = tape.add(filtered, term)?;
            for k in 2..self.order {
                let lc = tape.matmul(l_tilde, cur)?;
                let lc = tape.scale(lc, 2.0)?;
                let next = tape.sub(lc, prev)?;
                let ck = coeff(tape, k)?;
                let term = tape.mul(next, ck)?;
                filtered = tape.add(filtered, term)?;
                prev = cur;
                cur = next;
            }
        }

        let mapped = tape.matmul(filtered, w_k)?;
        let shifted = tape.add(mapped, b_k)?;
        let features = self.activation.apply(tape, shifted)?;

        Ok(SgcOutput {
            features,
            similarity: tape.value(similarity).to_vec(),
            evolved: tape.value(evolved).to_vec(),
        })
    }

    /// Plain evaluation for a single sample through the reference metric and
    /// Chebyshev routines. Returns `(output, L_e)`.
    pub fn reference_forward(&self, params: &SgcLayerParams, x: &Tensor, l_orig: &Tensor) -> Result<(Tensor, Tensor)> {
        let stages = evolved_laplacian_stages(x, l_orig, &params.metric)?;
        let mode = match self.lambda_max {
            LambdaPolicy::CompositionBound => LambdaMax::Fixed {
                value: self.lambda_bound(),
            },
            LambdaPolicy::PowerIteration { rel_tol, max_iters } => LambdaMax::Exact { rel_tol, max_iters },
        };
        let lambda = estimate_lambda_max(&stages.evolved, mode)?;
        let l_tilde = scale_laplacian(&stages.evolved, lambda)?;
        let filtered = chebyshev_filter(&l_tilde, x, &params.theta)?;
        let mapped = filtered.matmul(&params.w_k)?;
        let shifted = Tensor::from_fn(mapped.rows(), mapped.cols(), |i, j| mapped[(i, j)] + params.b_k[(0, j)]);
        Ok((params.activation.apply_plain(&shifted), stages.evolved))
    }
}

/// Runs one SGC-LL layer over a padded batch: returns the output batch (same
/// graphs, new features, padding still zero) and the tape node of the
/// unpadded output. Evolved Laplacians are appended to `laplacians.evolved`.
pub fn sgc_ll_forward(
    tape: &mut Tape,
    store: &ParamStore,
    layer: &SgcLayer,
    batch: &GraphBatch,
    laplacians: &mut LaplacianSet,
) -> Result<(GraphBatch, Var)> {
    if batch.feature_dim() != layer.in_features {
        return Err(Error::structural(format!(
            "layer `{}` expects {} input features, batch has {}",
            layer.name,
            layer.in_features,
            batch.feature_dim()
        )));
    }
    if laplacians.intrinsic.len() != batch.len() {
        *laplacians = LaplacianSet::for_batch(batch)?;
    }
    let ctx = BatchContext {
        node_counts: batch.node_counts().to_vec(),
        intrinsic: laplacians.intrinsic.clone(),
        neighbourhoods: batch.closed_neighbourhoods(),
    };
    let x = tape.constant_parts(batch.unpadded_features())?;
    let out = layer.forward(tape, store, &ctx, x)?;
    laplacians.evolved.push(out.evolved);
    let next = batch.with_features(tape.value(out.features))?;
    Ok((next, out.features))
}
