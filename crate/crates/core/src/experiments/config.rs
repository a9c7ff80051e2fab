//! Experiment configuration, read from TOML with one table per pipeline stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::Proposal;
use crate::model::{builtin_model, MomentModel};
use crate::numerics::{BasisFamily, Grid, Measure};
use crate::posterior::PathKind;
use crate::prior::{EigenKind, EigenSpec};
use crate::transform::{KernelKind, Regularization};

pub const MIN_GRID: usize = 100;

/// Density of a grid measure with respect to Lebesgue measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    Lebesgue,
    /// `e^{-x}`
    ExpNeg,
    /// `e^{-x²/2}`, left unnormalized.
    Gaussian,
}

impl DensityKind {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            DensityKind::Lebesgue => 1.0,
            DensityKind::ExpNeg => (-x).exp(),
            DensityKind::Gaussian => (-0.5 * x * x).exp(),
        }
    }
}

/// A uniform grid. Missing bounds fall back to the data range widened by `pad`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default)]
    pub pad: f64,
    pub density: DensityKind,
}

impl GridConfig {
    pub fn bounds(&self, data: &[f64]) -> Result<(f64, f64)> {
        let (dlo, dhi) = crate::numerics::grid::data_range(data)?;
        Ok((self.lo.unwrap_or(dlo - self.pad), self.hi.unwrap_or(dhi + self.pad)))
    }

    pub fn measure(&self, data: &[f64]) -> Result<Measure> {
        let (lo, hi) = self.bounds(data)?;
        let density = self.density;
        Measure::from_density(Grid::uniform(lo, hi, self.m)?, move |x| density.eval(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    pub kind: String,
    /// t-grid and ρ.
    pub t: GridConfig,
    pub regularization: Regularization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanConfig {
    /// `1 + Σ a_k φ_{d+1+k}`; empty coefficients give the constant 1.
    Series {
        #[serde(default)]
        coefficients: Vec<f64>,
    },
    Beta { q: f64 },
    /// Density of `N(location, scale²)` divided by the density of Π.
    Normal { location: f64, scale: f64 },
    /// Tikhonov pilot with constant `alpha`, projected onto the constraints.
    TwoStep { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// Family name, or `quantile_cosine` for the sample-quantile cosines.
    pub basis: String,
    pub j_total: usize,
    pub eigen: EigenKind,
    pub sigma0: f64,
    #[serde(default = "one")]
    pub c: f64,
    pub mean: MeanConfig,
    /// Uniform prior on θ. Not needed by the conjugate path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_bounds: Option<Vec<(f64, f64)>>,
}

fn one() -> f64 {
    1.0
}

impl PriorConfig {
    pub fn eigen_spec(&self) -> EigenSpec {
        EigenSpec {
            kind: self.eigen,
            sigma0: self.sigma0,
            c: self.c,
            j_total: self.j_total,
        }
    }

    pub fn family(&self, data: &[f64]) -> Result<BasisFamily> {
        if self.basis == "quantile_cosine" {
            Ok(BasisFamily::quantile_cosine(data))
        } else {
            BasisFamily::from_name(&self.basis)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorConfig {
    pub path: PathKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub total: usize,
    pub burn_in: usize,
    /// Defaults to the experiment seed plus one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub proposal: Proposal,
    pub init: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Points of the θ grid the posterior density is reported on.
    pub density_points: usize,
    pub bandwidth: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            density_points: 201,
            bandwidth: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: String,
    pub n: usize,
    pub theta_star: Vec<f64>,
    pub seed: u64,
    /// x-grid and Π.
    pub grid: GridConfig,
    pub transform: TransformConfig,
    pub prior: PriorConfig,
    pub posterior: PosteriorConfig,
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    pub fn mcmc_seed(&self) -> u64 {
        self.mcmc.seed.unwrap_or(self.seed.wrapping_add(1))
    }

    pub fn resolve_model(&self) -> Result<MomentModel> {
        builtin_model(&self.model)
    }

    pub fn kernel_kind(&self) -> Result<KernelKind> {
        KernelKind::from_name(&self.transform.kind)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let model = self.resolve_model()?;
        self.kernel_kind()?;
        if self.prior.basis != "quantile_cosine" {
            BasisFamily::from_name(&self.prior.basis)?;
        }
        if model.p != 1 {
            return bad(format!("the experiment pipeline handles scalar θ; model '{}' has p = {}", model.name, model.p));
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.grid.m < MIN_GRID {
            return bad(format!("grid.m must be at least {MIN_GRID}, got {}", self.grid.m));
        }
        // J = M spans the whole grid space and the completion turns near-dependent.
        if self.prior.j_total >= self.grid.m {
            return bad(format!("prior.j_total ({}) must be below grid.m ({})", self.prior.j_total, self.grid.m));
        }
        if self.transform.t.m < 2 {
            return bad("transform.t.m must be at least 2".into());
        }
        if self.theta_star.len() != model.p || !model.contains(&self.theta_star) {
            return bad(format!("theta_star {:?} is outside the parameter box of '{}'", self.theta_star, model.name));
        }
        let d = if self.posterior.path == PathKind::Conjugate { 0 } else { model.d };
        self.prior.eigen_spec().validate(d)?;
        if self.output.density_points < 2 || !(self.output.bandwidth > 0.0) {
            return bad("output needs at least 2 density points and a positive bandwidth".into());
        }
        if self.posterior.path != PathKind::Conjugate {
            let Some(bounds) = &self.prior.theta_bounds else {
                return bad("prior.theta_bounds is required for sampled paths".into());
            };
            if bounds.len() != model.p {
                return bad(format!("prior.theta_bounds has {} entries, expected {}", bounds.len(), model.p));
            }
            if self.mcmc.init.len() != model.p {
                return bad(format!("mcmc.init has {} entries, expected {}", self.mcmc.init.len(), model.p));
            }
            if self.mcmc.total <= self.mcmc.burn_in {
                return bad("mcmc.total must exceed mcmc.burn_in".into());
            }
            self.mcmc.proposal.validate(model.p)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "demo"
model = "exponential_overid"
n = 200
theta_star = [2.0]
seed = 11

[grid]
m = 400
pad = 1.0
density = "exp_neg"

[transform]
kind = "cdf"
regularization = "always"
t = { m = 100, density = "lebesgue" }

[prior]
basis = "cosine"
j_total = 60
eigen = { kind = "polynomial", alpha = 1.7 }
sigma0 = 1.0
mean = { kind = "two_step", alpha = 0.1 }
theta_bounds = [[1.0, 3.0]]

[posterior]
path = "svd"

[mcmc]
total = 200
burn_in = 100
proposal = { kind = "chi_squared_ceil" }
init = [1.0]
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.prior.c, 1.0);
        assert_eq!(c.output, OutputConfig::default());
        assert_eq!(c.mcmc_seed(), 12);
        assert_eq!(c.prior.eigen, EigenKind::Polynomial { alpha: 1.7 });
        let again = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_bad_values() {
        let with = |from: &str, to: &str| ExperimentConfig::from_toml(&SAMPLE.replace(from, to));
        assert!(with("m = 400", "m = 50").is_err());
        assert!(with("n = 200", "n = 1").is_err());
        assert!(with("j_total = 60", "j_total = 400").is_err());
        assert!(with("exponential_overid", "nope").is_err());
        assert!(with("\"cosine\"", "\"wavelet\"").is_err());
        assert!(with("path = \"svd\"", "path = \"mystery\"").is_err());
        assert!(with("theta_star = [2.0]", "theta_star = [-2.0]").is_err());
        assert!(with("total = 200", "total = 100").is_err());
        assert!(with("seed = 11", "seed = 11\nextra = 1").is_err());
        assert!(with("theta_bounds = [[1.0, 3.0]]", "").is_err());
    }

    #[test]
    fn grid_bounds_follow_the_data() {
        let g = GridConfig {
            m: 100,
            lo: None,
            hi: Some(10.0),
            pad: 1.0,
            density: DensityKind::Lebesgue,
        };
        assert_eq!(g.bounds(&[2.0, 5.0]).unwrap(), (1.0, 10.0));
    }
}
