//! Closed form under the empirical convention: the covariance basis is
//! orthonormal under the sample measure, the prior mean lives on `Π`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::MomentModel;
use crate::numerics::{GridFn, Measure, MeasureSource};
use crate::prior::{ConstrainedGpPrior, MeanStrategy, PriorSettings};
use crate::transform::{KernelKind, KernelTransform, Regularization, SampleTransform};

use super::svd::{whitened_data, whitened_residual, SvdSystem};

/// Pieces of the basis-path value; their sum is the log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisTerms {
    /// `-(n/2) Σ_{j≤d} (φ̄_j − m_j)²`, the moment part.
    pub moment: f64,
    /// `-(n/2) Σ_{j>d} (φ̄_j − m_j)² / (1 + n eig_j)`
    pub smoothing: f64,
    /// `-½ Σ_{j>d} log(1 + n eig_j)`
    pub log_det: f64,
}

impl BasisTerms {
    pub fn total(&self) -> f64 {
        self.moment + self.smoothing + self.log_det
    }
}

fn sample_size(data: &[f64], prior: &ConstrainedGpPrior) -> Result<usize> {
    let n = data.len();
    let m = prior.measure();
    match m.source() {
        MeasureSource::Empirical { n: ne } if *ne == n && m.nodes()[..n] == *data => Ok(n),
        MeasureSource::Empirical { .. } => Err(Error::Config(
            "basis path: prior basis was orthonormalized on a different sample".into(),
        )),
        MeasureSource::Grid { .. } => Err(Error::Config(
            "basis path needs a prior orthonormalized under the empirical measure".into(),
        )),
    }
}

pub fn log_lik_basis_terms(data: &[f64], prior: &ConstrainedGpPrior, mean_vector: &DVector<f64>) -> Result<BasisTerms> {
    let n = sample_size(data, prior)?;
    let j_total = prior.j_total();
    if mean_vector.len() != j_total {
        return Err(Error::Dimension {
            what: "mean coefficients",
            left: mean_vector.len(),
            right: j_total,
        });
    }
    let nf = n as f64;
    let basis = prior.basis();
    let eig = prior.eigenvalues();
    let d = prior.d();
    let mut moment = 0.0;
    let mut smoothing = 0.0;
    let mut log_det = 0.0;
    for j in 1..j_total {
        let bar = basis.row(j).columns(0, n).sum() / nf;
        let gap = bar - mean_vector[j];
        if j <= d {
            moment += gap * gap;
        } else {
            let s = nf * eig[j];
            smoothing += gap * gap / (1.0 + s);
            log_det += s.ln_1p();
        }
    }
    Ok(BasisTerms {
        moment: -0.5 * nf * moment,
        smoothing: -0.5 * nf * smoothing,
        log_det: -0.5 * log_det,
    })
}

/// Log-likelihood from sample averages of the basis and the prior-mean
/// coefficients `m_j = ⟨φ(f₀θ), φ_j⟩`.
pub fn log_lik_basis(data: &[f64], prior: &ConstrainedGpPrior, theta: &[f64], mean_vector: &DVector<f64>) -> Result<f64> {
    let value = log_lik_basis_terms(data, prior, mean_vector)?.total();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Evaluation {
            theta: theta.to_vec(),
            reason: format!("basis log-likelihood is {value}"),
        })
    }
}

/// `m_j = ∫ f₀ φ_j dΠ` using the basis values carried on the `Π` nodes.
pub fn mean_coefficients(e_prior: &ConstrainedGpPrior, f0: &GridFn, pi: &Measure) -> Result<DVector<f64>> {
    let e = e_prior.measure();
    let n = match e.source() {
        MeasureSource::Empirical { n } => *n,
        MeasureSource::Grid { .. } => {
            return Err(Error::Config("mean coefficients need an empirical-convention prior".into()))
        }
    };
    if e.len() != n + pi.len() || e.nodes()[n..] != *pi.nodes() {
        return Err(Error::Config("prior does not carry the dominating-measure nodes".into()));
    }
    pi.check_len("prior mean", f0.len())?;
    let fw = f0.values().component_mul(pi.weights());
    let basis = e_prior.basis();
    Ok(DVector::from_fn(basis.nrows(), |j, _| {
        basis.row(j).columns(n, pi.len()).transpose().dot(&fw)
    }))
}

/// Both likelihood paths set up on the same sample with the empirical convention.
#[derive(Debug)]
pub struct EmpiricalConvention {
    model: MomentModel,
    data: Vec<f64>,
    pi: Arc<Measure>,
    mean: MeanStrategy,
    e_prior: ConstrainedGpPrior,
    pi_prior: ConstrainedGpPrior,
}

/// Per-θ ingredients of the empirical convention.
#[derive(Debug, Clone)]
pub struct EmpiricalAt {
    pub e_prior: ConstrainedGpPrior,
    pub f0: GridFn,
    pub coefficients: DVector<f64>,
}

impl EmpiricalConvention {
    /// `settings.family` completes the sample-side basis; the mean side reuses it on `pi`.
    pub fn new(
        model: MomentModel,
        data: &[f64],
        pi: Arc<Measure>,
        settings: &PriorSettings,
        reference_theta: &[f64],
    ) -> Result<Self> {
        let e = Arc::new(Measure::empirical_with_carried(data, pi.nodes())?);
        let unit = MeanStrategy::Fixed(GridFn::constant(e.len(), 1.0));
        let e_settings = PriorSettings {
            mean: unit,
            ..settings.clone()
        };
        let e_prior = e_settings.build(&model, reference_theta, e)?;
        let pi_prior = settings.build(&model, reference_theta, pi.clone())?;
        Ok(Self {
            model,
            data: data.to_vec(),
            pi,
            mean: settings.mean.clone(),
            e_prior,
            pi_prior,
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn e_prior(&self) -> &ConstrainedGpPrior {
        &self.e_prior
    }

    pub fn at(&self, theta: &[f64]) -> Result<EmpiricalAt> {
        let unit = MeanStrategy::Fixed(GridFn::constant(self.e_prior.measure().len(), 1.0));
        let e_prior = self.e_prior.at_theta(&self.model, theta, &unit)?;
        let f0 = self.pi_prior.at_theta(&self.model, theta, &self.mean)?.prior_mean().clone();
        let coefficients = mean_coefficients(&e_prior, &f0, &self.pi)?;
        Ok(EmpiricalAt {
            e_prior,
            f0,
            coefficients,
        })
    }

    pub fn log_lik_basis(&self, theta: &[f64]) -> Result<f64> {
        let at = self.at(theta)?;
        log_lik_basis(&self.data, &at.e_prior, theta, &at.coefficients)
    }

    /// Cdf transform with t-nodes at the sorted sample and weights `1/n`,
    /// `Σ` left unregularized.
    pub fn cdf_transform(&self) -> Result<SampleTransform> {
        let mut t = self.data.clone();
        t.sort_by(f64::total_cmp);
        let kernel = KernelTransform::new(KernelKind::Cdf, Measure::empirical(&t)?);
        SampleTransform::build(kernel, &self.data, self.e_prior.measure().clone(), Regularization::Never)
    }

    /// The SVD path with `Kφ(f₀θ)` expanded in the same truncated basis.
    pub fn log_lik_svd(&self, st: &SampleTransform, theta: &[f64]) -> Result<f64> {
        let at = self.at(theta)?;
        let system = SvdSystem::new(st, &at.e_prior)?;
        let phi_hat = at.e_prior.basis().tr_mul(&at.coefficients);
        let e = whitened_residual(st, &whitened_data(st), &st.to_x_hat(&phi_hat));
        let value = system.log_lik(st.n(), &e);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Evaluation {
                theta: theta.to_vec(),
                reason: format!("log-likelihood is {value}"),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::exponential_overid;
    use crate::numerics::{BasisFamily, Grid};
    use crate::prior::EigenSpec;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn convention(n: usize, j: usize, c: f64) -> EmpiricalConvention {
        let model = exponential_overid();
        let data = model.simulate(&[2.0], n, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let pi = Arc::new(Measure::from_density(Grid::around_data(&data, 300).unwrap(), |x| (-x).exp()).unwrap());
        let settings = PriorSettings {
            eigen: EigenSpec::polynomial(1.7, 1.0, j).with_c(c),
            mean: MeanStrategy::Series { coefficients: vec![] },
            family: BasisFamily::quantile_cosine(&data),
        };
        EmpiricalConvention::new(model, &data, pi, &settings, &[2.0]).unwrap()
    }

    #[test]
    fn matched_coefficients_leave_the_log_det() {
        let conv = convention(60, 20, 1.0);
        let prior = conv.e_prior();
        let n = conv.data().len();
        let bars = DVector::from_fn(prior.j_total(), |j, _| prior.basis().row(j).columns(0, n).sum() / n as f64);
        let terms = log_lik_basis_terms(conv.data(), prior, &bars).unwrap();
        assert_eq!(terms.moment, 0.0);
        assert_eq!(terms.smoothing, 0.0);
        let expected: f64 = prior.eigenvalues().iter().skip(3).map(|e| (n as f64 * e).ln_1p()).sum();
        assert_abs_diff_eq!(terms.log_det, -0.5 * expected, epsilon = 1e-12);
    }

    #[test]
    fn moment_part_is_the_centered_gmm_quadratic() {
        let conv = convention(80, 30, 1.0);
        let model = exponential_overid();
        for theta in [1.7, 2.0, 2.4] {
            let at = conv.at(&[theta]).unwrap();
            let terms = log_lik_basis_terms(conv.data(), &at.e_prior, &at.coefficients).unwrap();
            let n = conv.data().len() as f64;
            let hs: Vec<DVector<f64>> = conv.data().iter().map(|&x| model.h(&[theta], x)).collect();
            let bar = hs.iter().fold(DVector::zeros(2), |a, h| a + h) / n;
            let cov = hs.iter().fold(DMatrix::zeros(2, 2), |a, h| a + (h - &bar) * (h - &bar).transpose()) / n;
            let q = (bar.transpose() * cov.try_inverse().unwrap() * &bar)[0];
            assert_abs_diff_eq!(terms.moment, -0.5 * n * q, epsilon = 1e-8 * q.max(1.0) * n);
        }
    }

    #[test]
    fn large_scale_kills_the_smoothing_part() {
        let unit = convention(80, 30, 1.0);
        let wide = convention(80, 30, 1e6);
        for theta in [1.7, 2.4] {
            let smoothing = |conv: &EmpiricalConvention| {
                let at = conv.at(&[theta]).unwrap();
                log_lik_basis_terms(conv.data(), &at.e_prior, &at.coefficients).unwrap().smoothing
            };
            let ratio = smoothing(&wide) / smoothing(&unit);
            assert!(ratio.abs() < 1e-4, "{ratio}");
        }
    }

    #[test]
    fn grid_prior_is_a_configuration_error() {
        let conv = convention(40, 10, 1.0);
        let grid_prior = PriorSettings {
            eigen: EigenSpec::polynomial(1.7, 1.0, 10),
            mean: MeanStrategy::Series { coefficients: vec![] },
            family: BasisFamily::Cosine,
        }
        .build(&exponential_overid(), &[2.0], conv.pi.clone())
        .unwrap();
        let m = DVector::zeros(10);
        assert!(matches!(log_lik_basis(conv.data(), &grid_prior, &[2.0], &m), Err(Error::Config(_))));
    }

    #[test]
    fn both_paths_differ_by_a_constant() {
        let conv = convention(120, 60, 1.0);
        let st = conv.cdf_transform().unwrap();
        let diffs: Vec<f64> = [1.6, 1.8, 2.0, 2.2, 2.5]
            .iter()
            .map(|t| conv.log_lik_svd(&st, &[*t]).unwrap() - conv.log_lik_basis(&[*t]).unwrap())
            .collect();
        for d in &diffs {
            assert_abs_diff_eq!(d, &diffs[0], epsilon = 1e-6);
        }
    }
}
