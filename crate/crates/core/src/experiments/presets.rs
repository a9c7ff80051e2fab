//! Built-in experiment configurations.

use super::config::{
    DensityKind, ExperimentConfig, GridConfig, McmcConfig, MeanConfig, OutputConfig, PosteriorConfig, PriorConfig,
    TransformConfig,
};
use crate::error::{Error, Result};
use crate::mcmc::Proposal;
use crate::model::{EXPONENTIAL_OVERID, MEAN_GAUSSIAN, MEAN_TRUNCATED};
use crate::posterior::PathKind;
use crate::prior::EigenKind;
use crate::transform::Regularization;

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_M: usize = 1000;
pub const DEFAULT_T: usize = 200;

fn fixed(m: usize, lo: f64, hi: f64, density: DensityKind) -> GridConfig {
    GridConfig {
        m,
        lo: Some(lo),
        hi: Some(hi),
        pad: 0.0,
        density,
    }
}

fn sampler(proposal: Proposal, init: f64) -> McmcConfig {
    McmcConfig {
        total: 10_000,
        burn_in: 5_000,
        seed: None,
        proposal,
        init: vec![init],
    }
}

/// Normal mean, mgf transform, closed-form update of `θ = ∫x f dΠ`.
pub fn exp1() -> ExperimentConfig {
    ExperimentConfig {
        name: "exp1".into(),
        model: MEAN_GAUSSIAN.into(),
        n: 1000,
        theta_star: vec![1.0],
        seed: DEFAULT_SEED,
        grid: fixed(DEFAULT_M, -6.0, 6.0, DensityKind::Gaussian),
        transform: TransformConfig {
            kind: "mgf".into(),
            t: fixed(DEFAULT_T, -0.5, 0.5, DensityKind::Gaussian),
            regularization: Regularization::Auto,
        },
        prior: PriorConfig {
            basis: "hermite".into(),
            j_total: 20,
            eigen: EigenKind::Geometric { a: 0.3 },
            sigma0: 1.0,
            c: 1.0,
            mean: MeanConfig::Normal {
                location: 2.0,
                scale: 1.0,
            },
            theta_bounds: None,
        },
        posterior: PosteriorConfig {
            path: PathKind::Conjugate,
        },
        mcmc: sampler(Proposal::GaussianRw { scale: 0.1 }, 1.0),
        output: OutputConfig::default(),
    }
}

/// Truncated normal mean on [-1, 1], Legendre basis, Beta prior mean.
pub fn exp2(kind: &str) -> ExperimentConfig {
    ExperimentConfig {
        name: format!("exp2_{kind}"),
        model: MEAN_TRUNCATED.into(),
        n: 1000,
        theta_star: vec![0.0],
        seed: DEFAULT_SEED,
        grid: fixed(DEFAULT_M, -1.0, 1.0, DensityKind::Lebesgue),
        transform: TransformConfig {
            kind: kind.into(),
            t: fixed(DEFAULT_T, -1.0, 1.0, DensityKind::Lebesgue),
            regularization: Regularization::Always,
        },
        prior: PriorConfig {
            basis: "legendre".into(),
            j_total: 300,
            eigen: EigenKind::Polynomial { alpha: 1.7 },
            sigma0: 5.0,
            c: 1.0,
            mean: MeanConfig::Beta { q: 2.0 },
            theta_bounds: Some(vec![(-1.0, 1.0)]),
        },
        posterior: PosteriorConfig { path: PathKind::Svd },
        mcmc: sampler(Proposal::Triangular { lo: -1.0, hi: 1.0 }, 0.5),
        output: OutputConfig::default(),
    }
}

/// Exponential mean with the over-identifying second moment.
pub fn exp3() -> ExperimentConfig {
    ExperimentConfig {
        name: "exp3".into(),
        model: EXPONENTIAL_OVERID.into(),
        n: 500,
        theta_star: vec![2.0],
        seed: DEFAULT_SEED,
        grid: GridConfig {
            m: DEFAULT_M,
            lo: None,
            hi: None,
            pad: 1.0,
            density: DensityKind::ExpNeg,
        },
        transform: TransformConfig {
            kind: "cdf".into(),
            t: GridConfig {
                m: DEFAULT_T,
                lo: None,
                hi: None,
                pad: 0.0,
                density: DensityKind::Lebesgue,
            },
            regularization: Regularization::Always,
        },
        prior: PriorConfig {
            basis: "cosine".into(),
            j_total: 300,
            eigen: EigenKind::Polynomial { alpha: 1.7 },
            sigma0: 100.0,
            c: 1.0,
            mean: MeanConfig::TwoStep { alpha: 0.1 },
            theta_bounds: Some(vec![(1.0, 3.0)]),
        },
        posterior: PosteriorConfig { path: PathKind::Svd },
        mcmc: sampler(Proposal::ChiSquaredCeil, 1.0),
        output: OutputConfig::default(),
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "exp1" => Ok(exp1()),
        "exp2_cdf" => Ok(exp2("cdf")),
        "exp2_mgf" => Ok(exp2("mgf")),
        "exp3" | "exp3_mc100" => Ok(exp3()),
        other => Err(Error::Config(format!("unknown experiment '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["exp1", "exp2_cdf", "exp2_mgf", "exp3"] {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(preset("exp4").is_err());
    }

    #[test]
    fn shipped_configs_match_presets() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for name in ["exp1", "exp2_cdf", "exp2_mgf", "exp3"] {
            let shipped = ExperimentConfig::load(&dir.join(format!("{name}.toml"))).unwrap();
            assert_eq!(shipped, preset(name).unwrap(), "{name}");
        }
    }
}
