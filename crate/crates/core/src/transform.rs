//! Sample transform `r_n`, the integral operators `K`, `K*` and the covariance `Σ`.
//!
//! Operator matrices act on nodal values: `K` maps functions on the x-nodes to
//! functions on the t-nodes, `(Kφ)(t_i) = Σ_j k(t_i, x_j) φ(x_j) w_j`. The
//! "hat" forms conjugate by square-root weights so adjoints become transposes:
//! `K̂ = D^{1/2} k W^{1/2}`, `Σ̂ = D^{1/2} σ D^{1/2}`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::linalg::{first_non_finite, safe_recip, scale_cols, scale_rows, SymEigen};
use crate::numerics::{GridFn, Measure};

/// Condition number above which `Regularization::Auto` adds `n⁻¹ I`.
pub const AUTO_REGULARIZE_COND: f64 = 1e12;

pub type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum KernelKind {
    /// `1{x ≤ t}`
    Cdf,
    /// `exp(t x)`
    Mgf,
    /// `cos(t x)` rows followed by `sin(t x)` rows.
    Characteristic,
    Custom(KernelFn),
}

impl fmt::Debug for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Cdf => "cdf",
            KernelKind::Mgf => "mgf",
            KernelKind::Characteristic => "characteristic",
            KernelKind::Custom(_) => "custom",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "cdf" => Ok(KernelKind::Cdf),
            "mgf" => Ok(KernelKind::Mgf),
            "characteristic" => Ok(KernelKind::Characteristic),
            other => Err(Error::Config(format!("unknown transform kind '{other}'"))),
        }
    }
}

/// A kernel `k(t, x)` together with the t-side measure ρ.
#[derive(Debug, Clone)]
pub struct KernelTransform {
    kind: KernelKind,
    rho: Measure,
}

impl KernelTransform {
    pub fn new(kind: KernelKind, rho: Measure) -> Self {
        Self { kind, rho }
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn rho(&self) -> &Measure {
        &self.rho
    }

    /// Dimension of the discretized t-side space.
    pub fn dim(&self) -> usize {
        match self.kind {
            KernelKind::Characteristic => 2 * self.rho.len(),
            _ => self.rho.len(),
        }
    }

    /// Quadrature weights of the t-side space (duplicated for the stacked characteristic kernel).
    pub fn f_weights(&self) -> DVector<f64> {
        match self.kind {
            KernelKind::Characteristic => {
                let w = self.rho.weights();
                DVector::from_iterator(self.dim(), w.iter().chain(w.iter()).copied())
            }
            _ => self.rho.weights().clone(),
        }
    }

    pub fn eval(&self, row: usize, x: f64) -> f64 {
        let nodes = self.rho.nodes();
        match &self.kind {
            KernelKind::Cdf => {
                if x <= nodes[row] {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::Mgf => (nodes[row] * x).exp(),
            KernelKind::Characteristic => {
                let m = nodes.len();
                if row < m {
                    (nodes[row] * x).cos()
                } else {
                    (nodes[row - m] * x).sin()
                }
            }
            KernelKind::Custom(k) => k(nodes[row], x),
        }
    }

    /// Entry `(i, j)` is `k(t_i, x_j)`.
    pub fn kernel_matrix(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        let out = DMatrix::from_fn(self.dim(), xs.len(), |i, j| self.eval(i, xs[j]));
        if let Some((r, c)) = first_non_finite(&out) {
            return Err(Error::NonFinite {
                what: "kernel",
                row: r,
                col: c,
            });
        }
        Ok(out)
    }
}

pub fn compute_rn(kernel: &KernelTransform, data: &[f64]) -> Result<GridFn> {
    if data.is_empty() {
        return Err(Error::Invalid("r_n needs at least one observation".into()));
    }
    let kd = kernel.kernel_matrix(data)?;
    Ok(GridFn::new(kd.column_mean()))
}

/// Operator matrix of `K`: entry `(i, j) = k(t_i, x_j) · w_Π(x_j)`.
pub fn build_k(kernel: &KernelTransform, pi: &Measure) -> Result<DMatrix<f64>> {
    Ok(scale_cols(&kernel.kernel_matrix(pi.nodes())?, pi.weights()))
}

/// Operator matrix of `K*`: entry `(j, i) = k(t_i, x_j) · w_ρ(t_i)`.
pub fn build_k_adjoint(kernel: &KernelTransform, pi: &Measure) -> Result<DMatrix<f64>> {
    Ok(scale_cols(&kernel.kernel_matrix(pi.nodes())?.transpose(), &kernel.f_weights()))
}

/// The empirical covariance function `σ(t_i, t_l)` (before ρ-weighting).
pub fn sigma_kernel(kernel: &KernelTransform, data: &[f64]) -> Result<DMatrix<f64>> {
    if data.len() < 2 {
        return Err(Error::Invalid(format!("covariance needs n >= 2, got {}", data.len())));
    }
    let kd = kernel.kernel_matrix(data)?;
    let n = data.len() as f64;
    let r = kd.column_mean();
    let mut s = &kd * kd.transpose() / n;
    s.ger(-1.0, &r, &r, 1.0);
    Ok((&s + s.transpose()) * 0.5)
}

/// Operator matrix of `Σ`: entry `(i, l) = σ(t_i, t_l) · w_ρ(t_l)`.
pub fn build_sigma(kernel: &KernelTransform, data: &[f64]) -> Result<DMatrix<f64>> {
    Ok(scale_cols(&sigma_kernel(kernel, data)?, &kernel.f_weights()))
}

pub fn regularize_sigma(sigma: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut out = sigma.clone();
    let shift = 1.0 / n as f64;
    for i in 0..out.nrows().min(out.ncols()) {
        out[(i, i)] += shift;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularization {
    /// Regularize when the condition number exceeds `AUTO_REGULARIZE_COND`.
    Auto,
    Always,
    Never,
}

impl Regularization {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "auto" => Ok(Regularization::Auto),
            "always" => Ok(Regularization::Always),
            "never" => Ok(Regularization::Never),
            other => Err(Error::Config(format!("unknown regularization '{other}'"))),
        }
    }
}

/// Everything the likelihood needs from the data, on fixed x- and t-nodes.
#[derive(Debug)]
pub struct SampleTransform {
    kernel: KernelTransform,
    x_measure: Arc<Measure>,
    n: usize,
    r_n: GridFn,
    k: DMatrix<f64>,
    k_adj: DMatrix<f64>,
    sigma: DMatrix<f64>,
    regularized: bool,
    f_sqrt_w: DVector<f64>,
    x_sqrt_w: DVector<f64>,
    k_hat: DMatrix<f64>,
    r_hat: DVector<f64>,
    sigma_hat: DMatrix<f64>,
    sigma_eig: OnceLock<SymEigen>,
    whitener: OnceLock<DMatrix<f64>>,
    whitened_k: OnceLock<DMatrix<f64>>,
}

impl SampleTransform {
    pub fn build(
        kernel: KernelTransform,
        data: &[f64],
        x_measure: Arc<Measure>,
        regularization: Regularization,
    ) -> Result<Self> {
        let n = data.len();
        let r_n = compute_rn(&kernel, data)?;
        let kx = kernel.kernel_matrix(x_measure.nodes())?;
        let fw = kernel.f_weights();
        let xw = x_measure.weights().clone();
        let k = scale_cols(&kx, &xw);
        let k_adj = scale_cols(&kx.transpose(), &fw);
        let sig = sigma_kernel(&kernel, data)?;
        let f_sqrt_w = fw.map(f64::sqrt);
        let x_sqrt_w = xw.map(f64::sqrt);
        let k_hat = scale_cols(&scale_rows(&kx, &f_sqrt_w), &x_sqrt_w);
        let r_hat = r_n.values().component_mul(&f_sqrt_w);
        let mut sigma_hat = scale_cols(&scale_rows(&sig, &f_sqrt_w), &f_sqrt_w);
        let mut sigma = scale_cols(&sig, &fw);
        let mut sigma_eig = OnceLock::new();
        let regularized = match regularization {
            Regularization::Always => true,
            Regularization::Never => false,
            Regularization::Auto => {
                let eig = SymEigen::new(&sigma_hat)?;
                let cond = eig.condition_number();
                let _ = sigma_eig.set(eig);
                cond > AUTO_REGULARIZE_COND
            }
        };
        if regularized {
            sigma = regularize_sigma(&sigma, n);
            sigma_hat = regularize_sigma(&sigma_hat, n);
            if let Some(eig) = sigma_eig.take() {
                let _ = sigma_eig.set(eig.shifted(1.0 / n as f64));
            }
        }
        if let Some((r, c)) = first_non_finite(&sigma_hat) {
            return Err(Error::NonFinite {
                what: "covariance",
                row: r,
                col: c,
            });
        }
        Ok(Self {
            kernel,
            x_measure,
            n,
            r_n,
            k,
            k_adj,
            sigma,
            regularized,
            f_sqrt_w,
            x_sqrt_w,
            k_hat,
            r_hat,
            sigma_hat,
            sigma_eig,
            whitener: OnceLock::new(),
            whitened_k: OnceLock::new(),
        })
    }

    pub fn kernel(&self) -> &KernelTransform {
        &self.kernel
    }

    pub fn x_measure(&self) -> &Arc<Measure> {
        &self.x_measure
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r_n(&self) -> &GridFn {
        &self.r_n
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn k_adj(&self) -> &DMatrix<f64> {
        &self.k_adj
    }

    /// Operator matrix of `Σ` (regularized when `regularized()`).
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn regularized(&self) -> bool {
        self.regularized
    }

    pub fn f_sqrt_weights(&self) -> &DVector<f64> {
        &self.f_sqrt_w
    }

    pub fn x_sqrt_weights(&self) -> &DVector<f64> {
        &self.x_sqrt_w
    }

    pub fn k_hat(&self) -> &DMatrix<f64> {
        &self.k_hat
    }

    pub fn r_hat(&self) -> &DVector<f64> {
        &self.r_hat
    }

    pub fn sigma_hat(&self) -> &DMatrix<f64> {
        &self.sigma_hat
    }

    pub fn sigma_eigen(&self) -> &SymEigen {
        self.sigma_eig
            .get_or_init(|| SymEigen::new(&self.sigma_hat).expect("covariance checked finite at build"))
    }

    /// `Σ̂^{-1/2}` (pseudo-inverse on the range of `Σ̂`).
    pub fn whitener(&self) -> &DMatrix<f64> {
        self.whitener.get_or_init(|| self.sigma_eigen().pinv_sqrt())
    }

    /// `Σ̂^{-1/2} K̂`
    pub fn whitened_k(&self) -> &DMatrix<f64> {
        self.whitened_k.get_or_init(|| self.whitener() * &self.k_hat)
    }

    /// Hat coordinates of an x-side function.
    pub fn to_x_hat(&self, f: &DVector<f64>) -> DVector<f64> {
        f.component_mul(&self.x_sqrt_w)
    }

    pub fn from_x_hat(&self, f: &DVector<f64>) -> DVector<f64> {
        f.component_mul(&safe_recip(&self.x_sqrt_w))
    }

    /// `(αI + K*K)⁻¹ K* r_n`, solved in hat coordinates by Cholesky.
    pub fn tikhonov_pilot(&self, alpha: f64) -> Result<GridFn> {
        if !(alpha > 0.0) {
            return Err(Error::Invalid(format!("Tikhonov constant must be positive, got {alpha}")));
        }
        let mut normal = self.k_hat.tr_mul(&self.k_hat);
        for i in 0..normal.nrows() {
            normal[(i, i)] += alpha;
        }
        let rhs = self.k_hat.tr_mul(&self.r_hat);
        let chol = normal.cholesky().ok_or(Error::Singular { what: "Tikhonov system" })?;
        Ok(GridFn::new(self.from_x_hat(&chol.solve(&rhs))))
    }
}
