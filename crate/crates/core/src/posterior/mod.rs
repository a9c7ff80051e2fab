//! Marginal posterior of θ and the conjugate update of `f`.

mod asymptotic;
mod basis;
mod conjugate;
mod gmm;
mod svd;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ThetaPrior;

pub use asymptotic::{asymptotic_information, AsymptoticInfo, MomentMatrices};
pub use basis::{log_lik_basis, log_lik_basis_terms, mean_coefficients, BasisTerms, EmpiricalAt, EmpiricalConvention};
pub use conjugate::{conditional_posterior_f, conjugate_linear_posterior, PosteriorF};
pub use gmm::{log_quasi_lik_cu_gmm, sample_moments};
pub use svd::{log_lik_svd, whitened_data, whitened_residual, SvdLikelihood, SvdSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Svd,
    Basis,
    CuGmm,
    Conjugate,
}

impl PathKind {
    pub fn name(self) -> &'static str {
        match self {
            PathKind::Svd => "svd",
            PathKind::Basis => "basis",
            PathKind::CuGmm => "cu_gmm",
            PathKind::Conjugate => "conjugate",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "svd" => Ok(PathKind::Svd),
            "basis" => Ok(PathKind::Basis),
            "cu_gmm" => Ok(PathKind::CuGmm),
            "conjugate" => Ok(PathKind::Conjugate),
            other => Err(Error::Config(format!("unknown posterior path '{other}'"))),
        }
    }
}

pub type LogLikFn = Arc<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>;

/// `log μ(θ | r_n)` up to an additive constant.
#[derive(Clone)]
pub struct LogPosterior {
    path: PathKind,
    prior: ThetaPrior,
    log_lik: LogLikFn,
}

impl fmt::Debug for LogPosterior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LogPosterior")
            .field("path", &self.path)
            .field("prior", &self.prior)
            .finish_non_exhaustive()
    }
}

impl LogPosterior {
    pub fn new(path: PathKind, prior: ThetaPrior, log_lik: impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'static) -> Self {
        Self {
            path,
            prior,
            log_lik: Arc::new(log_lik),
        }
    }

    pub fn path(&self) -> PathKind {
        self.path
    }

    pub fn prior(&self) -> &ThetaPrior {
        &self.prior
    }

    /// `-∞` wherever the prior vanishes; the likelihood is not evaluated there.
    pub fn evaluate(&self, theta: &[f64]) -> Result<f64> {
        let lp = self.prior.log_density(theta);
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        let ll = (self.log_lik)(theta)?;
        let value = ll + lp;
        if value.is_nan() || value == f64::INFINITY {
            return Err(Error::Evaluation {
                theta: theta.to_vec(),
                reason: format!("log-posterior is {value}"),
            });
        }
        Ok(value)
    }

    pub fn log_lik(&self, theta: &[f64]) -> Result<f64> {
        (self.log_lik)(theta)
    }

    /// Scalar-θ grid scan, evaluated in parallel.
    pub fn scan(&self, thetas: &[f64]) -> Vec<Result<f64>> {
        thetas.par_iter().map(|t| self.evaluate(&[*t])).collect()
    }
}

/// Values minus their mean, the comparison used for log-posteriors known up to a constant.
pub fn centered(values: &[f64]) -> Vec<f64> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| v - mean).collect()
}
