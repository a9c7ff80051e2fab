//! Gaussian conditioning of `f` on `r_n` when the prior is used directly.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::numerics::linalg::scale_cols;
use crate::numerics::GridFn;
use crate::prior::ConstrainedGpPrior;
use crate::transform::SampleTransform;

/// Shared pieces of the update. `P = Q W^{1/2} K̂ᵀ` and `G = n⁻¹Σ̂ + K̂ Ω̂ K̂ᵀ`.
struct Update {
    p: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `G⁻¹(r̂ − K̂ W^{1/2} f₀)`
    innovation: DVector<f64>,
}

fn update(f0: &DVector<f64>, q: &DMatrix<f64>, st: &SampleTransform, r_hat: &DVector<f64>) -> Result<Update> {
    let m = st.x_measure().len();
    if f0.len() != m || q.nrows() != m || q.ncols() != m {
        return Err(Error::Dimension {
            what: "prior covariance",
            left: q.nrows(),
            right: m,
        });
    }
    // K̂ W^{1/2}: F×M on original x-values
    let kw = scale_cols(st.k_hat(), st.x_sqrt_weights());
    let p = q * kw.transpose();
    let mut g = &kw * &p;
    g += st.sigma_hat() / st.n() as f64;
    g = (&g + g.transpose()) * 0.5;
    let chol = g.cholesky().ok_or(Error::Singular { what: "n⁻¹Σ + KΩK*" })?;
    let resid = r_hat - &kw * f0;
    let innovation = chol.solve(&resid);
    Ok(Update { p, chol, innovation })
}

/// Posterior mean and variance of `θ = ⟨f, g⟩_Π` for `f ~ GP(f0, Q)` with nodal covariance `Q`.
pub fn conjugate_linear_posterior(f0: &GridFn, q: &DMatrix<f64>, st: &SampleTransform, g: &GridFn) -> Result<(f64, f64)> {
    let x = st.x_measure();
    x.check_len("functional", g.len())?;
    let up = update(f0.values(), q, st, st.r_hat())?;
    let wg = g.values().component_mul(x.weights());
    let mean = wg.dot(&(f0.values() + &up.p * &up.innovation));
    let pg = up.p.tr_mul(&wg);
    let prior_var = wg.dot(&(q * &wg));
    let var = prior_var - pg.dot(&up.chol.solve(&pg));
    Ok((mean, var.max(0.0)))
}

/// Conditional law of `f` given `r_n`: mean on the x-nodes and nodal covariance.
#[derive(Debug, Clone)]
pub struct PosteriorF {
    pub mean: GridFn,
    pub covariance: DMatrix<f64>,
}

pub fn conditional_posterior_f(prior: &ConstrainedGpPrior, st: &SampleTransform, theta: &[f64]) -> Result<PosteriorF> {
    let q = prior.covariance_kernel();
    let f0 = prior.prior_mean().values();
    let up = update(f0, &q, st, st.r_hat()).map_err(|e| match e {
        Error::Singular { .. } => Error::Evaluation {
            theta: theta.to_vec(),
            reason: format!("{e}"),
        },
        other => other,
    })?;
    let mean = f0 + &up.p * &up.innovation;
    let solved = up.chol.solve(&up.p.transpose());
    let mut covariance = q - &up.p * solved;
    covariance = (&covariance + covariance.transpose()) * 0.5;
    Ok(PosteriorF {
        mean: GridFn::new(mean),
        covariance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::exponential_overid;
    use crate::numerics::linalg::SymEigen;
    use crate::numerics::{BasisFamily, Grid, Measure};
    use crate::prior::{build_prior, EigenSpec, MeanStrategy};
    use crate::transform::{KernelKind, KernelTransform, Regularization};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn exp_setup() -> (ConstrainedGpPrior, SampleTransform) {
        let model = exponential_overid();
        let data = model.simulate(&[2.0], 150, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let pi = Arc::new(Measure::from_density(Grid::around_data(&data, 120).unwrap(), |x| (-x).exp()).unwrap());
        let (lo, hi) = crate::numerics::grid::data_range(&data).unwrap();
        let rho = Measure::lebesgue(Grid::uniform(lo, hi, 80).unwrap());
        let st = SampleTransform::build(KernelTransform::new(KernelKind::Cdf, rho), &data, pi.clone(), Regularization::Always)
            .unwrap();
        let prior = build_prior(
            &model,
            &[2.0],
            &EigenSpec::polynomial(1.7, 1.0, 30),
            pi,
            &MeanStrategy::Series { coefficients: vec![] },
            &BasisFamily::Cosine,
        )
        .unwrap();
        (prior, st)
    }

    #[test]
    fn zero_covariance_is_a_point_mass() {
        let (prior, st) = exp_setup();
        let q = DMatrix::zeros(prior.measure().len(), prior.measure().len());
        let g = GridFn::from_fn(prior.measure().nodes(), |x| x);
        let (mean, var) = conjugate_linear_posterior(prior.prior_mean(), &q, &st, &g).unwrap();
        assert_eq!(var, 0.0);
        assert_abs_diff_eq!(mean, prior.measure().inner(prior.prior_mean(), &g).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn posterior_keeps_constraints_and_psd() {
        let (prior, st) = exp_setup();
        let post = conditional_posterior_f(&prior, &st, &[2.0]).unwrap();
        let g = exponential_overid().constraint_functions(&[2.0], prior.measure().nodes()).unwrap();
        let (mass, worst) = prior.constraint_residuals(&post.mean, &g).unwrap();
        assert!(mass < 1e-8 && worst < 1e-8, "{mass} {worst}");
        let eig = SymEigen::new(&post.covariance).unwrap();
        assert!(eig.min() >= -1e-8, "{}", eig.min());
    }

    #[test]
    fn exact_data_returns_the_prior_mean() {
        let (prior, st) = exp_setup();
        let f0 = prior.prior_mean().values();
        let r_hat = scale_cols(st.k_hat(), st.x_sqrt_weights()) * f0;
        let up = update(f0, &prior.covariance_kernel(), &st, &r_hat).unwrap();
        let mean = f0 + &up.p * &up.innovation;
        assert!((mean - f0).amax() < 1e-12);
    }
}
