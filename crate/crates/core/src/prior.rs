//! Degenerate Gaussian-process priors whose draws satisfy the moment restrictions.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::model::MomentModel;
use crate::numerics::linalg::scale_cols;
use crate::numerics::{complete_basis, gram_schmidt_with_coefficients, BasisFamily, GridFn, Measure, Orthonormalized};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EigenKind {
    /// `λ_j = j^{-α}`
    Polynomial { alpha: f64 },
    /// `λ_j = a^j`
    Geometric { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenSpec {
    pub kind: EigenKind,
    pub sigma0: f64,
    pub c: f64,
    /// Total number of basis functions, constraint directions included.
    pub j_total: usize,
}

impl EigenSpec {
    pub fn polynomial(alpha: f64, sigma0: f64, j_total: usize) -> Self {
        Self {
            kind: EigenKind::Polynomial { alpha },
            sigma0,
            c: 1.0,
            j_total,
        }
    }

    pub fn geometric(a: f64, sigma0: f64, j_total: usize) -> Self {
        Self {
            kind: EigenKind::Geometric { a },
            sigma0,
            c: 1.0,
            j_total,
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self.kind {
            EigenKind::Polynomial { alpha } if !(alpha > 1.0) => {
                return Err(Error::Config(format!("polynomial decay needs alpha > 1, got {alpha}")))
            }
            EigenKind::Geometric { a } if !(a > 0.0 && a < 1.0) => {
                return Err(Error::Config(format!("geometric decay needs 0 < a < 1, got {a}")))
            }
            _ => {}
        }
        if !(self.sigma0 > 0.0 && self.c > 0.0) {
            return Err(Error::Config("sigma0 and c must be positive".into()));
        }
        if self.j_total <= d + 1 {
            return Err(Error::Config(format!("J = {} must exceed d + 1 = {}", self.j_total, d + 1)));
        }
        let ratio = self.lambda(self.j_total - 1) / self.lambda(d + 1);
        if ratio > 1e-3 {
            log::warn!("λ_J / λ_(d+1) = {ratio:.2e}; truncation may be coarse");
        }
        Ok(())
    }

    /// Unscaled `λ_j` for basis index `j ≥ 1`.
    pub fn lambda(&self, j: usize) -> f64 {
        match self.kind {
            EigenKind::Polynomial { alpha } => (j as f64).powf(-alpha),
            EigenKind::Geometric { a } => a.powi(j as i32),
        }
    }

    /// `c σ₀ λ_j` for `j > d`, zero on the constraint directions.
    pub fn eigenvalues(&self, d: usize) -> DVector<f64> {
        DVector::from_fn(self.j_total, |j, _| if j <= d { 0.0 } else { self.c * (self.sigma0 * self.lambda(j)) })
    }
}

#[derive(Debug, Clone)]
pub enum MeanStrategy {
    /// `1 + Σ_{j>d} a_j φ_j`; coefficient `k` multiplies `φ_{d+1+k}`.
    Series { coefficients: Vec<f64> },
    /// Beta density on [-1, 1] with mean θ and shape `q`.
    Beta { q: f64 },
    /// Projection of a pilot estimate, typically `SampleTransform::tikhonov_pilot`.
    TwoStep { pilot: GridFn },
    /// Any function; projected onto the constraint set like the pilot.
    Fixed(GridFn),
}

/// Relative residual below which a constraint function counts as inside a cached span.
pub const SPAN_TOL: f64 = 1e-8;

/// Everything needed to rebuild a prior at another θ.
#[derive(Debug, Clone)]
pub struct PriorSettings {
    pub eigen: EigenSpec,
    pub mean: MeanStrategy,
    pub family: BasisFamily,
}

impl PriorSettings {
    pub fn build(&self, model: &MomentModel, theta: &[f64], measure: Arc<Measure>) -> Result<ConstrainedGpPrior> {
        build_prior(model, theta, &self.eigen, measure, &self.mean, &self.family)
    }
}

/// `GP(f₀θ, Ω₀θ)` restricted to the nodes of `measure`.
#[derive(Debug, Clone)]
pub struct ConstrainedGpPrior {
    spec: EigenSpec,
    family: BasisFamily,
    basis: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    prior_mean: GridFn,
    measure: Arc<Measure>,
    theta: Vec<f64>,
    d: usize,
    seed_transform: DMatrix<f64>,
    rejected: Vec<usize>,
    /// False once transported to another measure; the basis is then no longer
    /// orthonormal under `measure`.
    orthonormal: bool,
}

/// Orthonormalized constraint functions `1, h_1(θ,·), …, h_d(θ,·)`.
pub fn constraint_seed(model: &MomentModel, theta: &[f64], measure: &Measure) -> Result<Orthonormalized> {
    let g = model.constraint_functions(theta, measure.nodes())?;
    gram_schmidt_with_coefficients(&g, measure)
}

/// Π-orthogonal affine projection of `f` onto `{⟨f, g_k⟩ = δ_k0}`, where the
/// seed satisfies `seed_j = Σ_k T_jk g_k`.
pub fn project_onto_constraints(f: &DVector<f64>, seed: &Orthonormalized, m: &Measure) -> Result<GridFn> {
    let target = seed.coefficients.column(0);
    let mut out = f.clone();
    for (j, phi) in seed.functions.iter().enumerate() {
        let gap = target[j] - m.inner(f, phi)?;
        out.axpy(gap, phi, 1.0);
    }
    Ok(GridFn::new(out))
}

pub fn build_prior(
    model: &MomentModel,
    theta: &[f64],
    spec: &EigenSpec,
    measure: Arc<Measure>,
    mean: &MeanStrategy,
    family: &BasisFamily,
) -> Result<ConstrainedGpPrior> {
    model.check_theta(theta)?;
    let constraints = model.constraint_functions(theta, measure.nodes())?;
    ConstrainedGpPrior::from_constraints(&constraints, theta, spec, measure, mean, family)
}

impl ConstrainedGpPrior {
    /// `constraints[0]` must be the constant function.
    pub fn from_constraints(
        constraints: &[GridFn],
        theta: &[f64],
        spec: &EigenSpec,
        measure: Arc<Measure>,
        mean: &MeanStrategy,
        family: &BasisFamily,
    ) -> Result<Self> {
        let d = constraints
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::Invalid("at least the constant constraint is required".into()))?;
        spec.validate(d)?;
        let seed = gram_schmidt_with_coefficients(constraints, &measure)?;
        let completed = complete_basis(&seed.functions, spec.j_total, family, &measure)?;
        let basis = completed.to_matrix();
        let raw = raw_mean(mean, &basis, d, theta, &measure)?;
        let prior_mean = project_onto_constraints(&raw, &seed, &measure)?;
        Ok(Self {
            spec: *spec,
            family: family.clone(),
            basis,
            eigenvalues: spec.eigenvalues(d),
            prior_mean,
            measure,
            theta: theta.to_vec(),
            d,
            seed_transform: seed.coefficients,
            rejected: completed.rejected,
            orthonormal: true,
        })
    }

    pub fn spec(&self) -> &EigenSpec {
        &self.spec
    }

    pub fn family(&self) -> &BasisFamily {
        &self.family
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn basis_function(&self, j: usize) -> DVector<f64> {
        self.basis.row(j).transpose()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn prior_mean(&self) -> &GridFn {
        &self.prior_mean
    }

    pub fn measure(&self) -> &Arc<Measure> {
        &self.measure
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn j_total(&self) -> usize {
        self.basis.nrows()
    }

    /// Lower-triangular `T` with `φ_j = Σ_k T_jk g_k` over the constraint functions.
    pub fn seed_transform(&self) -> &DMatrix<f64> {
        &self.seed_transform
    }

    pub fn rejected_candidates(&self) -> &[usize] {
        &self.rejected
    }

    pub fn seed(&self) -> Orthonormalized {
        Orthonormalized {
            functions: (0..=self.d).map(|j| GridFn::new(self.basis_function(j))).collect(),
            coefficients: self.seed_transform.clone(),
        }
    }

    fn require_orthonormal(&self) -> Result<()> {
        if self.orthonormal {
            Ok(())
        } else {
            Err(Error::Config("a transported prior cannot be re-projected; transport a prior built at the new θ".into()))
        }
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// The same random function written as a density against `target` on the
    /// same nodes: `f ↦ f·z` with `z = dΠ/d target`. Every `∫k f dΠ` keeps its
    /// law, so the likelihood of θ is unchanged.
    pub fn transported(&self, target: Arc<Measure>) -> Result<Self> {
        if target.nodes() != self.measure.nodes() {
            return Err(Error::Invalid("transport needs the same nodes under both measures".into()));
        }
        let w = self.measure.weights();
        let w2 = target.weights();
        let mut z = DVector::zeros(w.len());
        for i in 0..w.len() {
            if w2[i] > 0.0 {
                z[i] = w[i] / w2[i];
            } else if w[i] > 0.0 {
                return Err(Error::Invalid(format!("target measure has no mass at node {i} where the source has")));
            }
        }
        Ok(Self {
            basis: scale_cols(&self.basis, &z),
            prior_mean: GridFn::new(self.prior_mean.values().component_mul(&z)),
            measure: target,
            orthonormal: false,
            ..self.clone()
        })
    }

    /// Same basis and spectrum with a different mean, projected onto the constraints.
    pub fn with_mean(&self, f: &GridFn) -> Result<Self> {
        self.require_orthonormal()?;
        self.measure.check_len("prior mean", f.len())?;
        let prior_mean = project_onto_constraints(f.values(), &self.seed(), &self.measure)?;
        Ok(Self {
            prior_mean,
            ..self.clone()
        })
    }

    /// Orthonormalized constraints at `theta` when they span the same space as
    /// this prior's; the completion then stays valid unchanged.
    pub fn reseed(&self, model: &MomentModel, theta: &[f64]) -> Result<Option<Orthonormalized>> {
        self.require_orthonormal()?;
        model.check_theta(theta)?;
        let seed = constraint_seed(model, theta, &self.measure)?;
        if seed.functions.len() != self.d + 1 {
            return Ok(None);
        }
        let current: Vec<DVector<f64>> = (0..=self.d).map(|j| self.basis_function(j)).collect();
        for f in &seed.functions {
            let mut r = f.values().clone();
            for phi in &current {
                let c = self.measure.inner(&r, phi)?;
                r.axpy(-c, phi, 1.0);
            }
            if !(self.measure.norm(&r)? < SPAN_TOL) {
                return Ok(None);
            }
        }
        Ok(Some(seed))
    }

    /// Projected prior mean for a seed produced by `reseed`.
    pub fn mean_for(&self, seed: &Orthonormalized, theta: &[f64], strategy: &MeanStrategy) -> Result<GridFn> {
        let raw = raw_mean(strategy, &self.basis, self.d, theta, &self.measure)?;
        project_onto_constraints(&raw, seed, &self.measure)
    }

    /// This prior moved to `theta`: reseeded when possible, rebuilt otherwise.
    pub fn at_theta(&self, model: &MomentModel, theta: &[f64], strategy: &MeanStrategy) -> Result<Self> {
        match self.reseed(model, theta)? {
            Some(seed) => {
                let prior_mean = self.mean_for(&seed, theta, strategy)?;
                let mut basis = self.basis.clone();
                for (j, f) in seed.functions.iter().enumerate() {
                    basis.set_row(j, &f.values().transpose());
                }
                Ok(Self {
                    basis,
                    prior_mean,
                    theta: theta.to_vec(),
                    seed_transform: seed.coefficients,
                    ..self.clone()
                })
            }
            None => build_prior(model, theta, &self.spec, self.measure.clone(), strategy, &self.family),
        }
    }

    /// Nodal covariance `Bᵀ diag(eig) B`.
    pub fn covariance_kernel(&self) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.basis.nrows(), self.basis.ncols(), |j, i| {
            self.basis[(j, i)] * self.eigenvalues[j]
        });
        self.basis.tr_mul(&scaled)
    }

    /// Operator matrix `Ω = Bᵀ diag(eig) B W`.
    pub fn covariance_operator(&self) -> DMatrix<f64> {
        scale_cols(&self.covariance_kernel(), self.measure.weights())
    }

    /// `Ω v` without forming `Ω`.
    pub fn apply_covariance(&self, v: &DVector<f64>) -> DVector<f64> {
        let coords = &self.basis * v.component_mul(self.measure.weights());
        self.basis.tr_mul(&coords.component_mul(&self.eigenvalues))
    }

    /// Columns `√eig_j φ_j` for `j > d`: a square-root factor of the nodal covariance.
    pub fn covariance_factor(&self) -> DMatrix<f64> {
        let k = self.basis.nrows() - self.d - 1;
        DMatrix::from_fn(self.basis.ncols(), k, |i, j| {
            let jj = j + self.d + 1;
            self.basis[(jj, i)] * self.eigenvalues[jj].sqrt()
        })
    }

    /// Truncated Karhunen–Loève draw `f₀θ + Σ_{j>d} √eig_j ξ_j φ_j`.
    pub fn sample(&self, rng: &mut dyn RngCore) -> GridFn {
        let mut f = self.prior_mean.values().clone();
        for j in (self.d + 1)..self.basis.nrows() {
            let xi: f64 = StandardNormal.sample(rng);
            let scale = self.eigenvalues[j].sqrt() * xi;
            if scale != 0.0 {
                for (fi, b) in f.iter_mut().zip(self.basis.row(j).iter()) {
                    *fi += scale * b;
                }
            }
        }
        GridFn::new(f)
    }

    /// `(|∫f − 1|, max_j |∫ h_j f|)` for the constraint functions `g`.
    pub fn constraint_residuals(&self, f: &DVector<f64>, g: &[GridFn]) -> Result<(f64, f64)> {
        let mass = (self.measure.integral(f)? - 1.0).abs();
        let mut worst: f64 = 0.0;
        for h in g.iter().skip(1) {
            worst = worst.max(self.measure.inner(f, h)?.abs());
        }
        Ok((mass, worst))
    }
}

fn raw_mean(
    strategy: &MeanStrategy,
    basis: &DMatrix<f64>,
    d: usize,
    theta: &[f64],
    measure: &Measure,
) -> Result<DVector<f64>> {
    Ok(match strategy {
        MeanStrategy::Series { coefficients } => prior_mean_series(basis, d, coefficients)?.into_inner(),
        MeanStrategy::Beta { q } => prior_mean_beta(theta_scalar(theta)?, *q, measure)?.into_inner(),
        MeanStrategy::TwoStep { pilot } | MeanStrategy::Fixed(pilot) => {
            measure.check_len("prior mean", pilot.len())?;
            pilot.values().clone()
        }
    })
}

fn theta_scalar(theta: &[f64]) -> Result<f64> {
    match theta {
        [t] => Ok(*t),
        _ => Err(Error::Config("the Beta prior mean needs a scalar θ".into())),
    }
}

pub fn sample_prior(prior: &ConstrainedGpPrior, rng: &mut dyn RngCore) -> GridFn {
    prior.sample(rng)
}

/// `1 + Σ_{j>d} a_j φ_j` from basis rows.
pub fn prior_mean_series(basis: &DMatrix<f64>, d: usize, coefficients: &[f64]) -> Result<GridFn> {
    if d + 1 + coefficients.len() > basis.nrows() {
        return Err(Error::Invalid(format!(
            "{} series coefficients exceed the {} available basis functions",
            coefficients.len(),
            basis.nrows() - d - 1
        )));
    }
    let mut f = DVector::from_element(basis.ncols(), 1.0);
    let mut bound = 0.0;
    for (k, a) in coefficients.iter().enumerate() {
        let row = basis.row(d + 1 + k);
        bound += a.abs() * row.amax();
        f += row.transpose() * *a;
    }
    if bound > 1.0 {
        log::warn!("Σ|a_j|·max|φ_j| = {bound:.3} > 1; prior mean may be negative");
    }
    Ok(GridFn::new(f))
}

/// `p_θ` such that Beta(p, q) rescaled to [-1, 1] has mean θ.
pub fn beta_shape_for_mean(theta: f64, q: f64) -> Result<f64> {
    if !(theta > -1.0 && theta < 1.0) {
        return Err(Error::Domain { theta: vec![theta] });
    }
    if !(q > 0.0) {
        return Err(Error::Invalid(format!("Beta shape q must be positive, got {q}")));
    }
    Ok(q * (1.0 + theta) / (1.0 - theta))
}

/// Beta(p_θ, q) density on [-1, 1] with respect to `measure`, discretized by
/// cell averages so the quadrature mass is exact.
pub fn prior_mean_beta(theta: f64, q: f64, measure: &Measure) -> Result<GridFn> {
    let p = beta_shape_for_mean(theta, q)?;
    let grid = measure
        .grid()
        .ok_or_else(|| Error::Config("the Beta prior mean needs a grid measure".into()))?;
    let pts = grid.points();
    let m = pts.len();
    let (lo, hi) = grid.bounds();
    let cdf = |x: f64| {
        let u = ((x + 1.0) / 2.0).clamp(0.0, 1.0);
        if u <= 0.0 {
            0.0
        } else if u >= 1.0 {
            1.0
        } else {
            beta_reg(p, q, u)
        }
    };
    let edges: Vec<f64> = (0..=m)
        .map(|i| match i {
            0 => lo,
            i if i == m => hi,
            i => 0.5 * (pts[i - 1] + pts[i]),
        })
        .collect();
    let cum: Vec<f64> = edges.iter().map(|&e| cdf(e)).collect();
    let w = measure.weights();
    let values = DVector::from_fn(m, |i, _| {
        let mass = cum[i + 1] - cum[i];
        if w[i] > 0.0 {
            mass / w[i]
        } else {
            0.0
        }
    });
    Ok(GridFn::new(values))
}

/// Pilot projected onto the constraint set of `prior`.
pub fn prior_mean_two_step(pilot: &GridFn, prior: &ConstrainedGpPrior) -> Result<GridFn> {
    prior.measure().check_len("pilot", pilot.len())?;
    project_onto_constraints(pilot.values(), &prior.seed(), prior.measure())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exponential_overid, mean_truncated, MomentModel};
    use crate::numerics::Grid;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp_measure(m: usize) -> Arc<Measure> {
        Arc::new(Measure::from_density(Grid::uniform(-1.0, 13.0, m).unwrap(), |x| (-x).exp()).unwrap())
    }

    fn exp_prior(c: f64) -> ConstrainedGpPrior {
        let spec = EigenSpec::polynomial(1.7, 1.0, 40).with_c(c);
        build_prior(
            &exponential_overid(),
            &[2.0],
            &spec,
            exp_measure(400),
            &MeanStrategy::Series { coefficients: vec![] },
            &BasisFamily::Cosine,
        )
        .unwrap()
    }

    #[test]
    fn transported_draws_keep_their_constraints() {
        let prior = exp_prior(1.0);
        let grid = Grid::uniform(-1.0, 13.0, 400).unwrap();
        let leb = Arc::new(Measure::lebesgue(grid));
        let moved = prior.transported(leb.clone()).unwrap();
        assert!(!moved.is_orthonormal());
        let g = exponential_overid().constraint_functions(&[2.0], leb.nodes()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let (mass, worst) = moved.constraint_residuals(&moved.sample(&mut rng), &g).unwrap();
            assert!(mass < 1e-9 && worst < 1e-9, "{mass} {worst}");
        }
        assert!(moved.reseed(&exponential_overid(), &[2.5]).is_err());
        let other = Arc::new(Measure::lebesgue(Grid::uniform(0.0, 13.0, 400).unwrap()));
        assert!(prior.transported(other).is_err());
    }

    #[test]
    fn eigenvalues_vanish_on_constraints() {
        let spec = EigenSpec::polynomial(1.7, 2.0, 10);
        let e = spec.eigenvalues(2);
        assert_eq!(&e.as_slice()[..3], &[0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(e[3], 2.0 * 3f64.powf(-1.7), epsilon = 1e-15);
        let g = EigenSpec::geometric(0.3, 1.0, 5).eigenvalues(0);
        assert_abs_diff_eq!(g[2], 0.09, epsilon = 1e-15);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(EigenSpec::polynomial(1.0, 1.0, 10).validate(1).is_err());
        assert!(EigenSpec::geometric(1.2, 1.0, 10).validate(1).is_err());
        assert!(EigenSpec::polynomial(1.7, 1.0, 2).validate(1).is_err());
    }

    #[test]
    fn covariance_annihilates_constraints() {
        let prior = exp_prior(1.0);
        let g = exponential_overid().constraint_functions(&[2.0], prior.measure().nodes()).unwrap();
        let omega = prior.covariance_operator();
        for v in &g {
            let out = &omega * v.values();
            assert!(out.norm() < 1e-10 * v.norm(), "{}", out.norm() / v.norm());
        }
    }

    #[test]
    fn covariance_eigen_relation() {
        let prior = exp_prior(1.0);
        let omega = prior.covariance_operator();
        for k in [3, 10, 39] {
            let phi = prior.basis_function(k);
            let lhs = &omega * &phi;
            assert!((lhs - &phi * prior.eigenvalues()[k]).amax() < 1e-8);
        }
    }

    #[test]
    fn trace_identity() {
        let prior = exp_prior(1.0);
        let omega = prior.covariance_operator();
        let w = prior.measure().weights();
        let kern = prior.covariance_kernel();
        let tr: f64 = (0..w.len()).map(|i| kern[(i, i)] * w[i]).sum();
        let expected: f64 = prior.eigenvalues().iter().sum();
        assert_abs_diff_eq!(tr, expected, epsilon = 1e-6);
        // Ω is the operator form of the same kernel
        assert_abs_diff_eq!(omega.trace(), expected, epsilon = 1e-6);
    }

    #[test]
    fn c_scaling_is_exact_for_powers_of_two() {
        let a = exp_prior(1.0).covariance_operator();
        let b = exp_prior(4.0).covariance_operator();
        assert_eq!(a * 4.0, b);
    }

    #[test]
    fn apply_covariance_matches_matrix() {
        let prior = exp_prior(1.0);
        let v = DVector::from_fn(400, |i, _| (i as f64 * 0.37).sin());
        assert!((prior.apply_covariance(&v) - prior.covariance_operator() * &v).amax() < 1e-10);
    }

    #[test]
    fn series_mean_examples() {
        let prior = exp_prior(1.0);
        let zero = prior_mean_series(prior.basis(), 2, &[]).unwrap();
        assert!(zero.iter().all(|&v| v == 1.0));
        let f = prior_mean_series(prior.basis(), 2, &[0.1]).unwrap();
        let m = prior.measure();
        assert_abs_diff_eq!(m.inner(&f, &prior.basis_function(3)).unwrap(), 0.1, epsilon = 1e-8);
        // the raw series keeps unit mass; build_prior projects the h-constraints
        assert_abs_diff_eq!(m.integral(&f).unwrap(), m.total_mass(), epsilon = 1e-10);
        let g = exponential_overid().constraint_functions(&[2.0], m.nodes()).unwrap();
        let (mass, worst) = prior.constraint_residuals(prior.prior_mean(), &g).unwrap();
        assert!(mass < 1e-10 && worst < 1e-10);
        assert!(prior_mean_series(prior.basis(), 2, &[0.0; 60]).is_err());
    }

    #[test]
    fn beta_shapes() {
        assert_abs_diff_eq!(beta_shape_for_mean(0.0, 2.0).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(beta_shape_for_mean(0.5, 2.0).unwrap(), 6.0, epsilon = 1e-15);
        assert!(beta_shape_for_mean(1.0, 2.0).is_err());
        assert!(beta_shape_for_mean(-1.0, 2.0).is_err());
    }

    #[test]
    fn beta_mean_has_unit_mass_and_target_mean() {
        let m = Measure::lebesgue(Grid::uniform(-1.0, 1.0, 1000).unwrap());
        for (theta, q) in [(0.0, 2.0), (0.5, 2.0), (-0.3, 3.0), (0.2, 0.7)] {
            let f = prior_mean_beta(theta, q, &m).unwrap();
            let x = GridFn::from_fn(m.nodes(), |x| x);
            assert_abs_diff_eq!(m.integral(&f).unwrap(), 1.0, epsilon = 1e-12);
            let p = beta_shape_for_mean(theta, q).unwrap();
            assert_abs_diff_eq!(m.inner(&f, &x).unwrap(), (p - q) / (p + q), epsilon = 1e-6);
        }
    }

    #[test]
    fn beta_two_two_is_symmetric_parabola() {
        let m = Measure::lebesgue(Grid::uniform(-1.0, 1.0, 1001).unwrap());
        let f = prior_mean_beta(0.0, 2.0, &m).unwrap();
        for i in 1..1000 {
            assert_abs_diff_eq!(f[i], f[1000 - i], epsilon = 1e-12);
            let x = m.nodes()[i];
            assert_abs_diff_eq!(f[i], 0.75 * (1.0 - x * x), epsilon = 1e-6);
        }
    }

    #[test]
    fn projection_is_idempotent_and_satisfies_constraints() {
        let model = mean_truncated();
        let m = Arc::new(Measure::lebesgue(Grid::uniform(-1.0, 1.0, 300).unwrap()));
        let seed = constraint_seed(&model, &[0.3], &m).unwrap();
        let raw = DVector::from_fn(300, |i, _| 1.0 + (i as f64 * 0.05).cos());
        let f = project_onto_constraints(&raw, &seed, &m).unwrap();
        let again = project_onto_constraints(f.values(), &seed, &m).unwrap();
        assert!((f.values() - again.values()).amax() < 1e-10);
        let x = GridFn::from_fn(m.nodes(), |x| x);
        assert_abs_diff_eq!(m.integral(&f).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(m.inner(&f, &x).unwrap(), 0.3, epsilon = 1e-10);
    }

    #[test]
    fn draws_satisfy_constraints() {
        let prior = exp_prior(1.0);
        let g = exponential_overid().constraint_functions(&[2.0], prior.measure().nodes()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let f = prior.sample(&mut rng);
            let (mass, worst) = prior.constraint_residuals(&f, &g).unwrap();
            assert!(mass < 1e-10 && worst < 1e-10, "{mass} {worst}");
        }
    }

    #[test]
    fn reseeding_matches_a_fresh_build() {
        let base = exp_prior(1.0);
        let model = exponential_overid();
        let moved = base.at_theta(&model, &[2.7], &MeanStrategy::Series { coefficients: vec![0.05] }).unwrap();
        let fresh = build_prior(
            &model,
            &[2.7],
            base.spec(),
            base.measure().clone(),
            &MeanStrategy::Series { coefficients: vec![0.05] },
            &BasisFamily::Cosine,
        )
        .unwrap();
        assert!(base.reseed(&model, &[2.7]).unwrap().is_some());
        let gap = (moved.covariance_operator() - fresh.covariance_operator()).amax();
        assert!(gap < 1e-9, "{gap}");
        let g = model.constraint_functions(&[2.7], base.measure().nodes()).unwrap();
        let (mass, worst) = moved.constraint_residuals(moved.prior_mean(), &g).unwrap();
        assert!(mass < 1e-10 && worst < 1e-10);
    }

    #[test]
    fn reseed_detects_a_moving_span() {
        let model = MomentModel::new("moving", 1, vec![(0.0, 3.0)], (f64::NEG_INFINITY, f64::INFINITY), |t, x, out| {
            out[0] = (t[0] * x).sin()
        })
        .unwrap();
        let m = Arc::new(Measure::lebesgue(Grid::uniform(-1.0, 1.0, 200).unwrap()));
        let prior = build_prior(
            &model,
            &[1.0],
            &EigenSpec::polynomial(1.7, 1.0, 10),
            m,
            &MeanStrategy::Series { coefficients: vec![] },
            &BasisFamily::Legendre,
        )
        .unwrap();
        assert!(prior.reseed(&model, &[1.0]).unwrap().is_some());
        assert!(prior.reseed(&model, &[2.0]).unwrap().is_none());
        let moved = prior.at_theta(&model, &[2.0], &MeanStrategy::Series { coefficients: vec![] }).unwrap();
        assert_eq!(moved.theta(), &[2.0]);
    }

    #[test]
    fn zero_spectrum_draw_is_the_mean() {
        let mut prior = exp_prior(1.0);
        prior.eigenvalues.fill(0.0);
        let f = prior.sample(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(&f, prior.prior_mean());
    }
}
