//! Marginal likelihood of θ through the singular system of `Σ^{-1/2} K Ω^{1/2}`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::MomentModel;
use crate::numerics::linalg::{first_non_finite, safe_recip};
use crate::numerics::GridFn;
use crate::prior::{ConstrainedGpPrior, MeanStrategy, PriorSettings};
use crate::transform::SampleTransform;

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITER: usize = 10_000;

/// Singular system with nonzero singular values only; the remaining `ψ_j`
/// complete an orthonormal system of the t-side and carry `l_j = 0`.
#[derive(Debug, Clone)]
pub struct SvdSystem {
    singular_values: DVector<f64>,
    /// Columns `ψ̂_j`, orthonormal in plain Euclidean coordinates.
    u_hat: DMatrix<f64>,
    t_inv_sqrt_w: DVector<f64>,
    /// Columns `ρ_j` in original x-coordinates.
    left: DMatrix<f64>,
}

impl SvdSystem {
    pub fn new(st: &SampleTransform, prior: &ConstrainedGpPrior) -> Result<Self> {
        let eval_err = |reason: String| Error::Evaluation {
            theta: prior.theta().to_vec(),
            reason,
        };
        if st.x_measure().len() != prior.measure().len() {
            return Err(Error::Dimension {
                what: "prior nodes",
                left: prior.measure().len(),
                right: st.x_measure().len(),
            });
        }
        let d = prior.d();
        let k = prior.j_total() - d - 1;
        let basis = prior.basis();
        let eig = prior.eigenvalues();
        let xw = st.x_sqrt_weights();
        let m = basis.ncols();
        // Φ̂_{>d}ᵀ diag(√eig)
        let factor = DMatrix::from_fn(m, k, |i, j| basis[(j + d + 1, i)] * xw[i] * eig[j + d + 1].sqrt());
        let c = st.whitened_k() * &factor;
        if let Some((r, col)) = first_non_finite(&c) {
            return Err(eval_err(format!("non-finite whitened operator at ({r}, {col})")));
        }
        let svd = c
            .try_svd(true, true, SVD_EPS, SVD_MAX_ITER)
            .ok_or_else(|| eval_err("SVD did not converge".into()))?;
        let u = svd.u.expect("requested");
        let v_t = svd.v_t.expect("requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
        let singular_values = DVector::from_iterator(order.len(), order.iter().map(|&i| svd.singular_values[i]));
        let u_hat = DMatrix::from_fn(u.nrows(), order.len(), |r, j| u[(r, order[j])]);
        // right vectors are coefficients on φ_{>d}; mapping through Φ gives ρ_j
        let left = DMatrix::from_fn(m, order.len(), |i, j| {
            let row = v_t.row(order[j]);
            (0..k).map(|q| row[q] * basis[(q + d + 1, i)]).sum()
        });
        Ok(Self {
            singular_values,
            u_hat,
            t_inv_sqrt_w: safe_recip(st.f_sqrt_weights()),
            left,
        })
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    /// `ψ_j` on the t-nodes.
    pub fn right_function(&self, j: usize) -> GridFn {
        GridFn::new(self.u_hat.column(j).component_mul(&self.t_inv_sqrt_w))
    }

    /// `ρ_j` on the x-nodes.
    pub fn left_function(&self, j: usize) -> GridFn {
        GridFn::new(self.left.column(j).into_owned())
    }

    pub fn right_hat(&self) -> &DMatrix<f64> {
        &self.u_hat
    }

    /// `-½Σ log(1 + n l_j²)`
    pub fn log_det_term(&self, n: usize) -> f64 {
        let nf = n as f64;
        -0.5 * self.singular_values.iter().map(|l| (nf * l * l).ln_1p()).sum::<f64>()
    }

    /// Log-likelihood from the whitened residual `e = Σ̂^{-1/2}(r̂ − K̂ f̂₀)`,
    /// summed over a complete orthonormal system of the t-side.
    pub fn log_lik(&self, n: usize, e: &DVector<f64>) -> f64 {
        let nf = n as f64;
        let proj = self.u_hat.tr_mul(e);
        // components outside span ψ have l = 0
        let outside = (e - &self.u_hat * &proj).norm_squared();
        let inside: f64 = proj
            .iter()
            .zip(self.singular_values.iter())
            .map(|(p, l)| p * p / (1.0 + nf * l * l))
            .sum();
        self.log_det_term(n) - 0.5 * nf * (outside + inside)
    }
}

/// `Σ̂^{-1/2}(r̂ − K̂ f̂)` for `f_hat` already in x-hat coordinates.
pub fn whitened_residual(st: &SampleTransform, whitened_r: &DVector<f64>, f_hat: &DVector<f64>) -> DVector<f64> {
    whitened_r - st.whitened_k() * f_hat
}

pub fn whitened_data(st: &SampleTransform) -> DVector<f64> {
    st.whitener() * st.r_hat()
}

fn finite_or(theta: &[f64], value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Evaluation {
            theta: theta.to_vec(),
            reason: format!("log-likelihood is {value}"),
        })
    }
}

/// One-shot evaluation with a prior already built at `theta`.
pub fn log_lik_svd(st: &SampleTransform, prior: &ConstrainedGpPrior, theta: &[f64]) -> Result<f64> {
    let system = SvdSystem::new(st, prior)?;
    let e = whitened_residual(st, &whitened_data(st), &st.to_x_hat(prior.prior_mean()));
    finite_or(theta, system.log_lik(st.n(), &e))
}

/// Evaluator that keeps the singular system while the constraint span is fixed in θ.
#[derive(Debug)]
pub struct SvdLikelihood {
    model: MomentModel,
    transform: Arc<SampleTransform>,
    mean: MeanStrategy,
    reference: ConstrainedGpPrior,
    system: SvdSystem,
    whitened_r: DVector<f64>,
}

impl SvdLikelihood {
    pub fn new(
        model: MomentModel,
        transform: Arc<SampleTransform>,
        settings: &PriorSettings,
        reference_theta: &[f64],
    ) -> Result<Self> {
        let reference = settings.build(&model, reference_theta, transform.x_measure().clone())?;
        let system = SvdSystem::new(&transform, &reference)?;
        let whitened_r = whitened_data(&transform);
        Ok(Self {
            model,
            transform,
            mean: settings.mean.clone(),
            reference,
            system,
            whitened_r,
        })
    }

    pub fn transform(&self) -> &Arc<SampleTransform> {
        &self.transform
    }

    pub fn reference_prior(&self) -> &ConstrainedGpPrior {
        &self.reference
    }

    pub fn system(&self) -> &SvdSystem {
        &self.system
    }

    /// Prior at `theta` sharing this evaluator's completion when possible.
    pub fn prior_at(&self, theta: &[f64]) -> Result<ConstrainedGpPrior> {
        self.reference.at_theta(&self.model, theta, &self.mean)
    }

    pub fn log_lik(&self, theta: &[f64]) -> Result<f64> {
        let n = self.transform.n();
        let value = match self.reference.reseed(&self.model, theta)? {
            Some(seed) => {
                let f0 = self.reference.mean_for(&seed, theta, &self.mean)?;
                let e = whitened_residual(&self.transform, &self.whitened_r, &self.transform.to_x_hat(&f0));
                self.system.log_lik(n, &e)
            }
            None => {
                let prior = self.prior_at(theta)?;
                let system = SvdSystem::new(&self.transform, &prior)?;
                let e = whitened_residual(&self.transform, &self.whitened_r, &self.transform.to_x_hat(prior.prior_mean()));
                system.log_lik(n, &e)
            }
        };
        finite_or(theta, value)
    }
}
