use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::grid::{GridFn, Measure};
use crate::error::{Error, Result};

/// Relative norm below which a projected vector counts as dependent.
pub const DEPENDENCE_TOL: f64 = 1e-12;

/// Incremental orthonormalizer under a measure's weighted inner product.
/// Uses two projection passes per vector.
pub(crate) struct Orthonormalizer<'a> {
    measure: &'a Measure,
    basis: DMatrix<f64>,
    len: usize,
}

impl<'a> Orthonormalizer<'a> {
    pub(crate) fn with_capacity(measure: &'a Measure, cap: usize) -> Self {
        Self {
            measure,
            basis: DMatrix::zeros(measure.len(), cap.max(1)),
            len: 0,
        }
    }

    fn grow(&mut self) {
        if self.len == self.basis.ncols() {
            let cap = self.basis.ncols() * 2;
            let old = std::mem::replace(&mut self.basis, DMatrix::zeros(0, 0));
            self.basis = old.resize_horizontally(cap, 0.0);
        }
    }

    pub(crate) fn push_trusted(&mut self, v: &DVector<f64>) {
        self.grow();
        self.basis.set_column(self.len, v);
        self.len += 1;
    }

    /// Orthonormalizes `v` against the current basis and appends it.
    /// Returns projection coefficients and the residual norm, or the
    /// relative residual when `v` is dependent.
    pub(crate) fn try_push(&mut self, mut v: DVector<f64>) -> std::result::Result<(DVector<f64>, f64), f64> {
        let w = self.measure.weights();
        let input_norm = v.iter().zip(w.iter()).map(|(a, b)| a * a * b).sum::<f64>().sqrt();
        let mut coef = DVector::zeros(self.len);
        if self.len > 0 {
            let q = self.basis.columns(0, self.len);
            for _ in 0..2 {
                let wv = v.component_mul(w);
                let c = q.tr_mul(&wv);
                v -= &q * &c;
                coef += c;
            }
        }
        let norm = v.iter().zip(w.iter()).map(|(a, b)| a * a * b).sum::<f64>().sqrt();
        if !(input_norm > 0.0) || !(norm >= DEPENDENCE_TOL * input_norm) {
            return Err(if input_norm > 0.0 { norm / input_norm } else { 0.0 });
        }
        v /= norm;
        self.grow();
        self.basis.set_column(self.len, &v);
        self.len += 1;
        Ok((coef, norm))
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn into_functions(self) -> Vec<GridFn> {
        (0..self.len).map(|j| GridFn::new(self.basis.column(j).into_owned())).collect()
    }
}

/// Orthonormal functions with their change of basis from the inputs.
#[derive(Debug, Clone)]
pub struct Orthonormalized {
    pub functions: Vec<GridFn>,
    /// Lower-triangular; `functions[j] = Σ_k coefficients[(j, k)] · input[k]`.
    pub coefficients: DMatrix<f64>,
}

pub fn gram_schmidt(vectors: &[GridFn], m: &Measure) -> Result<Vec<GridFn>> {
    Ok(gram_schmidt_with_coefficients(vectors, m)?.functions)
}

pub fn gram_schmidt_with_coefficients(vectors: &[GridFn], m: &Measure) -> Result<Orthonormalized> {
    let k = vectors.len();
    let mut ortho = Orthonormalizer::with_capacity(m, k);
    let mut t = DMatrix::<f64>::zeros(k, k);
    for (j, v) in vectors.iter().enumerate() {
        m.check_len("input vector", v.len())?;
        let (c, norm) = ortho
            .try_push(v.values().clone())
            .map_err(|ratio| Error::DegenerateBasis { index: j, ratio })?;
        let mut row = DVector::<f64>::zeros(k);
        row[j] = 1.0;
        for (i, ci) in c.iter().enumerate() {
            row -= t.row(i).transpose() * *ci;
        }
        t.set_row(j, &(row / norm).transpose());
    }
    Ok(Orthonormalized {
        functions: ortho.into_functions(),
        coefficients: t,
    })
}

/// Candidate generators used to complete a basis.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisFamily {
    /// Powers of the node domain mapped affinely onto [-1, 1].
    Monomial,
    /// Legendre polynomials of the mapped variable.
    Legendre,
    /// Orthonormal probabilists' Hermite functions `He_k / sqrt(k!)`, unmapped.
    Hermite,
    /// `cos(kπ(x - lo)/(hi - lo))` over the node domain.
    Cosine,
    /// `cos(kπ F(x))`, `F` the piecewise-linear mid-rank cdf of the knots.
    /// Exactly orthogonal on the knots themselves.
    QuantileCosine { knots: Arc<[f64]> },
}

impl BasisFamily {
    pub fn quantile_cosine(sample: &[f64]) -> Self {
        let mut knots = sample.to_vec();
        knots.sort_by(f64::total_cmp);
        BasisFamily::QuantileCosine { knots: knots.into() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BasisFamily::Monomial => "monomial",
            BasisFamily::Legendre => "legendre",
            BasisFamily::Hermite => "hermite",
            BasisFamily::Cosine => "cosine",
            BasisFamily::QuantileCosine { .. } => "quantile_cosine",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "monomial" => Ok(BasisFamily::Monomial),
            "legendre" => Ok(BasisFamily::Legendre),
            "hermite" => Ok(BasisFamily::Hermite),
            "cosine" => Ok(BasisFamily::Cosine),
            other => Err(Error::Config(format!("unknown basis family '{other}'"))),
        }
    }

    pub(crate) fn candidates<'a>(&'a self, nodes: &'a [f64], domain: (f64, f64)) -> Candidates<'a> {
        let (lo, hi) = domain;
        let half = 0.5 * (hi - lo).max(f64::MIN_POSITIVE);
        let mid = 0.5 * (hi + lo);
        let arg: Vec<f64> = match self {
            BasisFamily::Monomial | BasisFamily::Legendre => nodes.iter().map(|x| (x - mid) / half).collect(),
            BasisFamily::Hermite => nodes.to_vec(),
            BasisFamily::Cosine => nodes.iter().map(|x| (x - lo) / (2.0 * half)).collect(),
            BasisFamily::QuantileCosine { knots } => nodes.iter().map(|&x| mid_rank_cdf(knots, x)).collect(),
        };
        Candidates {
            family: self,
            arg,
            k: 0,
            prev: None,
            prev2: None,
        }
    }
}

fn mid_rank_cdf(knots: &[f64], x: f64) -> f64 {
    let n = knots.len();
    let nf = n as f64;
    if n == 1 || x <= knots[0] {
        return 0.5 / nf;
    }
    if x >= knots[n - 1] {
        return 1.0 - 0.5 / nf;
    }
    let i = knots.partition_point(|&k| k <= x) - 1;
    let (a, b) = (knots[i], knots[i + 1]);
    let frac = if b > a { (x - a) / (b - a) } else { 0.0 };
    (i as f64 + 0.5 + frac) / nf
}

pub(crate) struct Candidates<'a> {
    family: &'a BasisFamily,
    arg: Vec<f64>,
    k: usize,
    prev: Option<DVector<f64>>,
    prev2: Option<DVector<f64>>,
}

impl Iterator for Candidates<'_> {
    type Item = DVector<f64>;

    fn next(&mut self) -> Option<DVector<f64>> {
        let k = self.k;
        let m = self.arg.len();
        let u = &self.arg;
        let next = match self.family {
            BasisFamily::Monomial => DVector::from_iterator(m, u.iter().map(|x| x.powi(k as i32))),
            BasisFamily::Legendre | BasisFamily::Hermite => {
                let is_legendre = matches!(self.family, BasisFamily::Legendre);
                match (&self.prev, &self.prev2) {
                    (None, _) => DVector::from_element(m, 1.0),
                    (Some(_), None) => DVector::from_column_slice(u),
                    (Some(p1), Some(p2)) => {
                        let kf = k as f64;
                        DVector::from_iterator(
                            m,
                            (0..m).map(|i| {
                                if is_legendre {
                                    ((2.0 * kf - 1.0) * u[i] * p1[i] - (kf - 1.0) * p2[i]) / kf
                                } else {
                                    (u[i] * p1[i] - (kf - 1.0).sqrt() * p2[i]) / kf.sqrt()
                                }
                            }),
                        )
                    }
                }
            }
            BasisFamily::Cosine | BasisFamily::QuantileCosine { .. } => {
                DVector::from_iterator(m, u.iter().map(|x| (k as f64 * PI * x).cos()))
            }
        };
        if matches!(self.family, BasisFamily::Legendre | BasisFamily::Hermite) {
            self.prev2 = self.prev.take();
            self.prev = Some(next.clone());
        }
        self.k += 1;
        Some(next)
    }
}

#[derive(Debug, Clone)]
pub struct CompletedBasis {
    pub functions: Vec<GridFn>,
    /// Candidate indices skipped as dependent.
    pub rejected: Vec<usize>,
}

impl CompletedBasis {
    /// Rows are basis functions.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let m = self.functions.first().map_or(0, |f| f.len());
        DMatrix::from_fn(self.functions.len(), m, |j, i| self.functions[j][i])
    }
}

fn max_abs_gram_error(functions: &[GridFn], m: &Measure) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in functions.iter().enumerate() {
        for (j, b) in functions.iter().enumerate().take(i + 1) {
            let target = if i == j { 1.0 } else { 0.0 };
            let ip = m.inner(a, b).unwrap_or(f64::NAN);
            worst = worst.max((ip - target).abs());
        }
    }
    worst
}

/// Extends an orthonormal seed to `j_total` functions with candidates from `family`.
pub fn complete_basis(seed: &[GridFn], j_total: usize, family: &BasisFamily, m: &Measure) -> Result<CompletedBasis> {
    for f in seed {
        m.check_len("seed function", f.len())?;
    }
    let gram_err = max_abs_gram_error(seed, m);
    if !(gram_err < 1e-8) {
        return Err(Error::Invalid(format!("seed is not orthonormal (max Gram error {gram_err:.3e})")));
    }
    if j_total < seed.len() {
        return Err(Error::Invalid(format!("J = {j_total} is smaller than the seed size {}", seed.len())));
    }
    let mut ortho = Orthonormalizer::with_capacity(m, j_total);
    for f in seed {
        ortho.push_trusted(f.values());
    }
    let mut rejected = Vec::new();
    let budget = 2 * j_total + 64;
    let mut tried = 0;
    let mut candidates = family.candidates(m.nodes(), m.domain());
    while ortho.len() < j_total {
        if tried >= budget {
            return Err(Error::BasisExhausted {
                tried,
                found: ortho.len(),
                wanted: j_total,
            });
        }
        let cand = candidates.next().expect("candidate stream is unbounded");
        if ortho.try_push(cand).is_err() {
            log::debug!("{} candidate {tried} rejected as dependent", family.name());
            rejected.push(tried);
        }
        tried += 1;
    }
    Ok(CompletedBasis {
        functions: ortho.into_functions(),
        rejected,
    })
}
