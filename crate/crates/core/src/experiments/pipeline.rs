//! Data, grids, transform and prior for one configuration, then the estimate.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StatNormal};

use super::config::ExperimentConfig;
use crate::error::{Error, Result, StageExt};
use crate::mcmc::{self, Chain};
use crate::model::{MomentModel, ThetaPrior};
use crate::numerics::{BasisFamily, GridFn, Measure};
use crate::posterior::{
    asymptotic_information, conjugate_linear_posterior, log_quasi_lik_cu_gmm, EmpiricalConvention, LogPosterior,
    MomentMatrices, PathKind, SvdLikelihood,
};
use crate::prior::{ConstrainedGpPrior, MeanStrategy, PriorSettings};
use crate::transform::{KernelTransform, SampleTransform};

use super::config::MeanConfig;

pub fn simulate_data(model: &MomentModel, n: usize, theta_star: &[f64], seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Invalid("cannot simulate an empty sample".into()));
    }
    model.simulate(theta_star, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Single column with header `x`.
pub fn write_data_csv(path: &Path, data: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x"])?;
    for x in data {
        w.write_record([x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_data_csv(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = rec.get(0).unwrap_or("");
        let x: f64 = field
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("row {}: '{field}' is not a number", i + 1)))?;
        out.push(x);
    }
    Ok(out)
}

/// Everything that is fixed before θ is explored.
#[derive(Debug)]
pub struct Problem {
    pub config: ExperimentConfig,
    pub model: MomentModel,
    pub data: Vec<f64>,
    pub pi: Arc<Measure>,
    pub transform: Arc<SampleTransform>,
    pub settings: PriorSettings,
}

impl Problem {
    /// Simulates from the config when `data` is `None`.
    pub fn new(config: &ExperimentConfig, data: Option<Vec<f64>>) -> Result<Self> {
        config.validate().stage("config")?;
        let model = config.resolve_model().stage("config")?;
        let data = match data {
            Some(d) => d,
            None => simulate_data(&model, config.n, &config.theta_star, config.seed).stage("simulate")?,
        };
        let mut grid = config.grid.clone();
        let basis_path = config.posterior.path == PathKind::Basis;
        if basis_path {
            // the sample measure must dominate Π here, so Π stays inside the data range
            grid.lo = None;
            grid.hi = None;
            grid.pad = 0.0;
        }
        let pi = Arc::new(grid.measure(&data).stage("grid")?);
        let rho = config.transform.t.measure(&data).stage("grid")?;
        let kernel = KernelTransform::new(config.kernel_kind().stage("config")?, rho);
        let transform =
            Arc::new(SampleTransform::build(kernel, &data, pi.clone(), config.transform.regularization).stage("transform")?);
        let mean = match &config.prior.mean {
            MeanConfig::Series { coefficients } => MeanStrategy::Series {
                coefficients: coefficients.clone(),
            },
            MeanConfig::Beta { q } => MeanStrategy::Beta { q: *q },
            &MeanConfig::Normal { location, scale } => {
                let density = grid.density;
                let pdf = StatNormal::new(location, scale).map_err(|e| Error::Config(e.to_string())).stage("prior")?;
                MeanStrategy::Fixed(GridFn::from_fn(pi.nodes(), |x| pdf.pdf(x) / density.eval(x)))
            }
            MeanConfig::TwoStep { alpha } => MeanStrategy::TwoStep {
                pilot: transform.tikhonov_pilot(*alpha).stage("prior")?,
            },
        };
        let settings = PriorSettings {
            eigen: config.prior.eigen_spec(),
            mean,
            // Completing a generic family on the sample knots is near-dependent for large J;
            // the quantile cosines are orthogonal there by construction.
            family: if basis_path {
                BasisFamily::quantile_cosine(&data)
            } else {
                config.prior.family(&data).stage("prior")?
            },
        };
        Ok(Self {
            config: config.clone(),
            model,
            data,
            pi,
            transform,
            settings,
        })
    }

    pub fn theta_prior(&self) -> Result<ThetaPrior> {
        let bounds = self
            .config
            .prior
            .theta_bounds
            .clone()
            .ok_or_else(|| Error::Config("prior.theta_bounds is required".into()))?;
        ThetaPrior::uniform(bounds)
    }

    /// Midpoint of the θ prior; the reference at which cached operators are built.
    pub fn reference_theta(&self) -> Vec<f64> {
        match &self.config.prior.theta_bounds {
            Some(b) => b.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
            None => self.config.theta_star.clone(),
        }
    }

    pub fn log_posterior(&self) -> Result<LogPosterior> {
        self.log_posterior_for(self.config.posterior.path)
    }

    pub fn log_posterior_for(&self, path: PathKind) -> Result<LogPosterior> {
        let prior = self.theta_prior().stage("prior")?;
        let reference = self.reference_theta();
        match path {
            PathKind::Svd => {
                let lik = SvdLikelihood::new(self.model.clone(), self.transform.clone(), &self.settings, &reference)
                    .stage("likelihood")?;
                Ok(LogPosterior::new(path, prior, move |t| lik.log_lik(t)))
            }
            PathKind::Basis => {
                let conv = EmpiricalConvention::new(self.model.clone(), &self.data, self.pi.clone(), &self.settings, &reference)
                    .stage("likelihood")?;
                Ok(LogPosterior::new(path, prior, move |t| conv.log_lik_basis(t)))
            }
            PathKind::CuGmm => {
                let model = self.model.clone();
                let data = self.data.clone();
                Ok(LogPosterior::new(path, prior, move |t| log_quasi_lik_cu_gmm(&data, &model, t)))
            }
            PathKind::Conjugate => Err(Error::Config("the conjugate path has no log-posterior to sample".into())),
        }
    }

    /// Predicted posterior sd `Ĩ^{-1/2}/√n` at `theta`, from sample moment matrices.
    pub fn asymptotic_sd(&self, theta: &[f64]) -> Option<f64> {
        if !self.model.has_jacobian() || !self.model.contains(theta) {
            return None;
        }
        let mm = MomentMatrices::from_sample(&self.model, theta, &self.data).ok()?;
        let info = asymptotic_information(&self.model, theta, &mm, self.data.len()).ok()?;
        Some(info.posterior_sd_pred[0]).filter(|v| v.is_finite())
    }

    /// `g` with `h(θ, x) = g(x) − θ`, required by the conjugate path.
    fn linear_functional(&self) -> Result<GridFn> {
        let theta = &self.config.theta_star;
        let nodes = self.pi.nodes();
        let linear = self.model.d == 1
            && self.model.has_jacobian()
            && nodes.iter().all(|&x| self.model.jacobian(theta, x)[(0, 0)] == -1.0);
        if !linear {
            return Err(Error::Config(format!(
                "the conjugate path needs a model of the form h = g(x) - θ; '{}' is not",
                self.model.name
            )));
        }
        Ok(GridFn::from_fn(nodes, |x| self.model.h(theta, x)[0] + theta[0]))
    }

    /// Prior under the unit-mass constraint only, with θ read off as `⟨f, g⟩_Π`.
    pub fn conjugate_prior(&self) -> Result<ConstrainedGpPrior> {
        if !matches!(self.settings.mean, MeanStrategy::Series { .. } | MeanStrategy::Fixed(_)) {
            return Err(Error::Config("the conjugate path takes a series or normal prior mean".into()));
        }
        let unit = GridFn::constant(self.pi.len(), 1.0);
        ConstrainedGpPrior::from_constraints(
            &[unit],
            &self.config.theta_star,
            &self.settings.eigen,
            self.pi.clone(),
            &self.settings.mean,
            &self.settings.family,
        )
    }

    /// Gaussian posterior `(mean, variance)` of θ on the conjugate path.
    pub fn conjugate_theta(&self) -> Result<(f64, f64)> {
        let g = self.linear_functional().stage("config")?;
        let prior = self.conjugate_prior().stage("prior")?;
        let q: DMatrix<f64> = prior.covariance_kernel();
        conjugate_linear_posterior(prior.prior_mean(), &q, &self.transform, &g).stage("posterior")
    }
}

/// Schema of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub path: PathKind,
    pub posterior_mean: f64,
    pub map: f64,
    pub posterior_sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub asym_sd: Option<f64>,
    /// Not defined for the conjugate path.
    pub acceptance_rate: Option<f64>,
    pub effective_sample_size: Option<f64>,
    /// Only filled in on request, so repeated runs stay byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub theta: Vec<f64>,
    pub density: Vec<f64>,
}

impl DensityGrid {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["theta", "density"])?;
        for (t, d) in self.theta.iter().zip(&self.density) {
            w.write_record([t.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        self.theta
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(t, d)| 0.5 * (t[1] - t[0]) * (d[0] + d[1]))
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct Estimation {
    pub result: EstimationResult,
    pub chain: Option<Chain>,
    pub density: DensityGrid,
    pub elapsed_s: f64,
}

impl Estimation {
    /// Writes `result.json`, `density.csv` and, for sampled paths, `chain.csv`.
    pub fn write(&self, dir: &Path, timing: bool) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut result = self.result.clone();
        result.runtime_s = timing.then_some(self.elapsed_s);
        let mut json = serde_json::to_string_pretty(&result)?;
        json.push('\n');
        fs::write(dir.join("result.json"), json)?;
        self.density.write_csv(&dir.join("density.csv"))?;
        if let Some(chain) = &self.chain {
            chain.write_csv(fs::File::create(dir.join("chain.csv"))?)?;
        }
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
}

pub fn run_estimate(config: &ExperimentConfig, data: Option<Vec<f64>>) -> Result<Estimation> {
    let start = Instant::now();
    let problem = Problem::new(config, data)?;
    let mut est = estimate(&problem)?;
    est.elapsed_s = start.elapsed().as_secs_f64();
    Ok(est)
}

pub fn estimate(problem: &Problem) -> Result<Estimation> {
    let config = &problem.config;
    let points = config.output.density_points;
    if config.posterior.path == PathKind::Conjugate {
        let (mean, var) = problem.conjugate_theta()?;
        let sd = var.sqrt();
        let z = StatNormal::standard().inverse_cdf(0.975);
        let theta = linspace(mean - 6.0 * sd.max(1e-12), mean + 6.0 * sd.max(1e-12), points);
        let density = theta
            .iter()
            .map(|t| if sd > 0.0 { (-0.5 * ((t - mean) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt()) } else { 0.0 })
            .collect();
        return Ok(Estimation {
            result: EstimationResult {
                path: PathKind::Conjugate,
                posterior_mean: mean,
                map: mean,
                posterior_sd: sd,
                ci_low: mean - z * sd,
                ci_high: mean + z * sd,
                asym_sd: problem.asymptotic_sd(&[mean]),
                acceptance_rate: None,
                effective_sample_size: None,
                runtime_s: None,
            },
            chain: None,
            density: DensityGrid { theta, density },
            elapsed_s: 0.0,
        });
    }
    let log_post = problem.log_posterior()?;
    let mc = &config.mcmc;
    let chain = mcmc::run_mh(&log_post, &mc.proposal, &mc.init, mc.total, mc.burn_in, config.mcmc_seed()).stage("mcmc")?;
    let summary = || -> Result<(f64, f64, f64, (f64, f64))> {
        Ok((
            mcmc::posterior_mean(&chain)?[0],
            mcmc::map_estimate(&chain, &log_post)?[0],
            mcmc::posterior_sd(&chain)?[0],
            mcmc::credible_interval(&chain, 0, 0.95)?,
        ))
    };
    let (mean, map, sd, (ci_low, ci_high)) = summary().stage("summary")?;
    let draws = chain.coordinate(0);
    let bw = config.output.bandwidth;
    let (lo, hi) = draws.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let theta = linspace(lo - 5.0 * bw, hi + 5.0 * bw, points);
    let density = mcmc::kernel_density(&draws, bw, &theta).stage("summary")?.values().as_slice().to_vec();
    Ok(Estimation {
        result: EstimationResult {
            path: config.posterior.path,
            posterior_mean: mean,
            map,
            posterior_sd: sd,
            ci_low,
            ci_high,
            asym_sd: problem.asymptotic_sd(&[mean]),
            acceptance_rate: Some(chain.acceptance_rate()),
            effective_sample_size: Some(mcmc::effective_sample_size(&draws)),
            runtime_s: None,
        },
        chain: Some(chain),
        density: DensityGrid { theta, density },
        elapsed_s: 0.0,
    })
}

/// One row of a θ-grid dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub theta: f64,
    pub logpost: f64,
    pub path: PathKind,
}

/// Log-posterior over `thetas`, evaluated in parallel.
pub fn scan(problem: &Problem, path: PathKind, thetas: &[f64]) -> Result<Vec<ScanRow>> {
    let log_post = problem.log_posterior_for(path)?;
    let values: Vec<Vec<f64>> = thetas.iter().map(|t| vec![*t]).collect();
    use rayon::prelude::*;
    values
        .par_iter()
        .map(|t| {
            Ok(ScanRow {
                theta: t[0],
                logpost: log_post.evaluate(t)?,
                path,
            })
        })
        .collect::<Result<Vec<_>>>()
        .stage("scan")
}

pub fn write_scan_csv(path: &Path, rows: &[ScanRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["theta", "logpost", "path"])?;
    for r in rows {
        w.write_record([r.theta.to_string(), r.logpost.to_string(), r.path.name().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Default scan grid: the θ prior support.
pub fn scan_grid(problem: &Problem, points: usize) -> Result<Vec<f64>> {
    let bounds = problem
        .config
        .prior
        .theta_bounds
        .as_ref()
        .ok_or_else(|| Error::Config("scan needs prior.theta_bounds".into()))?;
    let (lo, hi) = bounds[0];
    if points < 2 {
        return Err(Error::Config("scan needs at least 2 points".into()));
    }
    Ok(linspace(lo, hi, points))
}
