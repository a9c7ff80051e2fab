//! Estimating-equation models `E[h(θ, X)] = 0`, parameter priors and the built-in catalog.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp, Normal};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StatNormal};

use crate::error::{Error, Result};
use crate::numerics::GridFn;

pub type MomentFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;
/// Fills a d×p matrix with `∂h/∂θ`.
pub type JacobianFn = Arc<dyn Fn(&[f64], f64, &mut DMatrix<f64>) + Send + Sync>;
pub type Simulator = Arc<dyn Fn(&[f64], usize, &mut dyn RngCore) -> Result<Vec<f64>> + Send + Sync>;

#[derive(Clone)]
pub struct MomentModel {
    pub name: String,
    pub d: usize,
    pub p: usize,
    pub theta_box: Vec<(f64, f64)>,
    pub support: (f64, f64),
    h: MomentFn,
    dh: Option<JacobianFn>,
    simulator: Option<Simulator>,
}

impl fmt::Debug for MomentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MomentModel")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("p", &self.p)
            .field("theta_box", &self.theta_box)
            .field("support", &self.support)
            .finish_non_exhaustive()
    }
}

impl MomentModel {
    pub fn new(
        name: impl Into<String>,
        d: usize,
        theta_box: Vec<(f64, f64)>,
        support: (f64, f64),
        h: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        let p = theta_box.len();
        if p == 0 || d < p {
            return Err(Error::Invalid(format!("need d >= p >= 1, got d = {d}, p = {p}")));
        }
        if theta_box.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::Invalid("parameter box has an empty side".into()));
        }
        Ok(Self {
            name: name.into(),
            d,
            p,
            theta_box,
            support,
            h: Arc::new(h),
            dh: None,
            simulator: None,
        })
    }

    pub fn with_jacobian(mut self, dh: impl Fn(&[f64], f64, &mut DMatrix<f64>) + Send + Sync + 'static) -> Self {
        self.dh = Some(Arc::new(dh));
        self
    }

    pub fn with_simulator(
        mut self,
        sim: impl Fn(&[f64], usize, &mut dyn RngCore) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.simulator = Some(Arc::new(sim));
        self
    }

    pub fn has_jacobian(&self) -> bool {
        self.dh.is_some()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.p && theta.iter().zip(&self.theta_box).all(|(t, (lo, hi))| *lo <= *t && *t <= *hi)
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if self.contains(theta) {
            Ok(())
        } else {
            Err(Error::Domain { theta: theta.to_vec() })
        }
    }

    pub fn h(&self, theta: &[f64], x: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.d);
        (self.h)(theta, x, out.as_mut_slice());
        out
    }

    /// `∂h/∂θ` as a d×p matrix; central differences when no analytic form was given.
    pub fn jacobian(&self, theta: &[f64], x: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.d, self.p);
        match &self.dh {
            Some(dh) => dh(theta, x, &mut out),
            None => {
                let mut tp = theta.to_vec();
                for k in 0..self.p {
                    let step = 1e-6 * theta[k].abs().max(1.0);
                    tp[k] = theta[k] + step;
                    let up = self.h(&tp, x);
                    tp[k] = theta[k] - step;
                    let down = self.h(&tp, x);
                    tp[k] = theta[k];
                    out.set_column(k, &((up - down) / (2.0 * step)));
                }
            }
        }
        out
    }

    /// The constraint functions `1, h_1(θ,·), …, h_d(θ,·)` on `nodes`.
    pub fn constraint_functions(&self, theta: &[f64], nodes: &[f64]) -> Result<Vec<GridFn>> {
        let h = evaluate_h_matrix(self, theta, nodes)?;
        let mut out = Vec::with_capacity(self.d + 1);
        out.push(GridFn::constant(nodes.len(), 1.0));
        for j in 0..self.d {
            out.push(GridFn::new(h.row(j).transpose()));
        }
        Ok(out)
    }

    pub fn simulate(&self, theta_star: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Invalid("sample size must be positive".into()));
        }
        let sim = self
            .simulator
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("model '{}' has no simulator", self.name)))?;
        self.check_theta(theta_star)?;
        sim(theta_star, n, rng)
    }
}

/// Row `j`, column `i` holds `h_j(θ, x_i)`.
pub fn evaluate_h_matrix(model: &MomentModel, theta: &[f64], nodes: &[f64]) -> Result<DMatrix<f64>> {
    model.check_theta(theta)?;
    let mut out = DMatrix::zeros(model.d, nodes.len());
    let mut buf = vec![0.0; model.d];
    for (i, &x) in nodes.iter().enumerate() {
        (model.h)(theta, x, &mut buf);
        for (j, v) in buf.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "moment function",
                    row: j,
                    col: i,
                });
            }
            out[(j, i)] = *v;
        }
    }
    Ok(out)
}

pub type LogDensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type PriorSampler = Arc<dyn Fn(&mut dyn RngCore) -> Vec<f64> + Send + Sync>;

/// Prior on θ.
#[derive(Clone)]
pub enum ThetaPrior {
    Uniform { bounds: Vec<(f64, f64)> },
    Custom { log_density: LogDensityFn, sampler: PriorSampler },
}

impl fmt::Debug for ThetaPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaPrior::Uniform { bounds } => f.debug_struct("Uniform").field("bounds", bounds).finish(),
            ThetaPrior::Custom { .. } => f.write_str("Custom"),
        }
    }
}

impl ThetaPrior {
    pub fn uniform(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return Err(Error::Invalid("uniform prior needs finite non-empty bounds".into()));
        }
        Ok(ThetaPrior::Uniform { bounds })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ThetaPrior::Uniform { .. } => "uniform",
            ThetaPrior::Custom { .. } => "custom",
        }
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match self {
            ThetaPrior::Uniform { bounds } => {
                if theta.len() != bounds.len() {
                    return f64::NEG_INFINITY;
                }
                let mut lp = 0.0;
                for (t, (lo, hi)) in theta.iter().zip(bounds) {
                    if !(*lo <= *t && *t <= *hi) {
                        return f64::NEG_INFINITY;
                    }
                    lp -= (hi - lo).ln();
                }
                lp
            }
            ThetaPrior::Custom { log_density, .. } => log_density(theta),
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        match self {
            ThetaPrior::Uniform { bounds } => bounds.iter().map(|(lo, hi)| rng.random_range(*lo..=*hi)).collect(),
            ThetaPrior::Custom { sampler, .. } => sampler(rng),
        }
    }
}

pub const MEAN_GAUSSIAN: &str = "mean_gaussian";
pub const MEAN_TRUNCATED: &str = "mean_truncated";
pub const EXPONENTIAL_OVERID: &str = "exponential_overid";

/// Mean of N(mu, 1) truncated to [-1, 1].
fn truncated_unit_mean(mu: f64) -> f64 {
    let z = StatNormal::standard();
    let (a, b) = (-1.0 - mu, 1.0 - mu);
    let mass = z.cdf(b) - z.cdf(a);
    mu + (z.pdf(a) - z.pdf(b)) / mass
}

/// Location whose unit-variance normal truncated to [-1, 1] has mean `target`.
fn truncated_location(target: f64) -> f64 {
    if target == 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (-12.0, 12.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if truncated_unit_mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn mean_gaussian() -> MomentModel {
    MomentModel::new(MEAN_GAUSSIAN, 1, vec![(f64::NEG_INFINITY, f64::INFINITY)], (f64::NEG_INFINITY, f64::INFINITY), |t, x, out| {
        out[0] = x - t[0]
    })
    .expect("valid dimensions")
    .with_jacobian(|_, _, j| j[(0, 0)] = -1.0)
    .with_simulator(|t, n, rng| {
        let dist = Normal::new(t[0], 1.0).map_err(|e| Error::Invalid(e.to_string()))?;
        Ok((0..n).map(|_| dist.sample(rng)).collect())
    })
}

/// Data from N(μ, 1) truncated to [-1, 1], μ chosen so the mean is θ*, drawn by rejection.
pub fn mean_truncated() -> MomentModel {
    MomentModel::new(MEAN_TRUNCATED, 1, vec![(-1.0, 1.0)], (-1.0, 1.0), |t, x, out| out[0] = x - t[0])
        .expect("valid dimensions")
        .with_jacobian(|_, _, j| j[(0, 0)] = -1.0)
        .with_simulator(|t, n, rng| {
            if !(t[0].abs() <= 0.8) {
                return Err(Error::Invalid("truncated-normal simulator supports |θ*| <= 0.8".into()));
            }
            let mu = truncated_location(t[0]);
            let dist = Normal::new(mu, 1.0).map_err(|e| Error::Invalid(e.to_string()))?;
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let x: f64 = dist.sample(rng);
                if (-1.0..=1.0).contains(&x) {
                    out.push(x);
                }
            }
            Ok(out)
        })
}

/// `h(θ, x) = (x - θ, 2θ² - x²)` for an exponential law with mean θ.
pub fn exponential_overid() -> MomentModel {
    MomentModel::new(EXPONENTIAL_OVERID, 2, vec![(0.0, f64::INFINITY)], (0.0, f64::INFINITY), |t, x, out| {
        out[0] = x - t[0];
        out[1] = 2.0 * t[0] * t[0] - x * x;
    })
    .expect("valid dimensions")
    .with_jacobian(|t, _, j| {
        j[(0, 0)] = -1.0;
        j[(1, 0)] = 4.0 * t[0];
    })
    .with_simulator(|t, n, rng| {
        let dist = Exp::new(1.0 / t[0]).map_err(|e| Error::Invalid(e.to_string()))?;
        Ok((0..n).map(|_| dist.sample(rng)).collect())
    })
}

pub fn builtin_models() -> Vec<MomentModel> {
    vec![mean_gaussian(), mean_truncated(), exponential_overid()]
}

pub fn builtin_model(name: &str) -> Result<MomentModel> {
    builtin_models()
        .into_iter()
        .find(|m| m.name == name)
        .ok_or_else(|| Error::Config(format!("unknown model '{name}'")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn h_matrix_for_the_mean() {
        let m = mean_gaussian();
        let h = evaluate_h_matrix(&m, &[1.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.row(0).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn exponential_column_at_the_truth() {
        let m = exponential_overid();
        let h = evaluate_h_matrix(&m, &[2.0], &[2.0]).unwrap();
        assert_eq!((h[(0, 0)], h[(1, 0)]), (0.0, 4.0));
    }

    #[test]
    fn theta_outside_box_is_a_domain_error() {
        let m = mean_truncated();
        assert!(matches!(evaluate_h_matrix(&m, &[1.5], &[0.0]), Err(Error::Domain { .. })));
    }

    #[test]
    fn non_finite_h_is_located() {
        let m = MomentModel::new("log", 1, vec![(0.0, 1.0)], (0.0, 1.0), |t, x, out| out[0] = x.ln() - t[0]).unwrap();
        match evaluate_h_matrix(&m, &[0.5], &[1.0, 0.0]) {
            Err(Error::NonFinite { row: 0, col: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn catalog_dimensions() {
        let t = builtin_model(MEAN_TRUNCATED).unwrap();
        assert_eq!((t.d, t.p, t.theta_box.clone()), (1, 1, vec![(-1.0, 1.0)]));
        let e = builtin_model(EXPONENTIAL_OVERID).unwrap();
        assert_eq!((e.d, e.p), (2, 1));
        assert!(builtin_model("nope").is_err());
    }

    #[test]
    fn simulators_are_seed_deterministic() {
        for m in builtin_models() {
            let theta = if m.name == EXPONENTIAL_OVERID { [2.0] } else { [0.0] };
            let a = m.simulate(&theta, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            let b = m.simulate(&theta, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn truncated_location_inverts_the_mean() {
        for target in [-0.8, -0.4, 0.1, 0.6, 0.8] {
            let mu = truncated_location(target);
            assert!((truncated_unit_mean(mu) - target).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_prior_is_flat_inside_and_empty_outside() {
        let p = ThetaPrior::uniform(vec![(1.0, 3.0)]).unwrap();
        assert_eq!(p.log_density(&[2.0]), -(2.0f64).ln());
        assert_eq!(p.log_density(&[3.5]), f64::NEG_INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t = p.sample(&mut rng);
            assert!((1.0..=3.0).contains(&t[0]));
        }
    }

    #[test]
    fn zero_sample_size_is_rejected() {
        let m = mean_gaussian();
        assert!(m.simulate(&[1.0], 0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
