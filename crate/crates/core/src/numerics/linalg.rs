use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff for pseudo-inverse square roots.
pub const PSEUDO_INVERSE_TOL: f64 = 1e-11;

/// Symmetric eigendecomposition with eigenvalues sorted decreasingly.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension {
                what: "symmetric matrix columns",
                left: a.ncols(),
                right: a.nrows(),
            });
        }
        if let Some((r, c)) = first_non_finite(a) {
            return Err(Error::NonFinite {
                what: "symmetric matrix",
                row: r,
                col: c,
            });
        }
        let sym = (a + a.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
        let vectors = eig.eigenvectors.select_columns(&order);
        Ok(Self { values, vectors })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Ratio of extreme eigenvalues; infinite when the smallest is not positive.
    pub fn condition_number(&self) -> f64 {
        let lo = self.min();
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            self.max() / lo
        }
    }

    /// Same eigenvectors, eigenvalues shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            values: self.values.add_scalar(delta),
            vectors: self.vectors.clone(),
        }
    }

    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = self.values.map(f);
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |i, j| self.vectors[(i, j)] * d[j]);
        scaled * self.vectors.transpose()
    }

    /// `A^{1/2}` with negative eigenvalues clipped to 0.
    pub fn sqrt(&self) -> DMatrix<f64> {
        self.spectral_map(|l| l.max(0.0).sqrt())
    }

    /// Pseudo-inverse square root; eigenvalues below `PSEUDO_INVERSE_TOL` times
    /// the largest are treated as zero.
    pub fn pinv_sqrt(&self) -> DMatrix<f64> {
        let cut = PSEUDO_INVERSE_TOL * self.max().max(0.0);
        self.spectral_map(|l| if l > cut { 1.0 / l.sqrt() } else { 0.0 })
    }

    pub fn rank(&self) -> usize {
        let cut = PSEUDO_INVERSE_TOL * self.max().max(0.0);
        self.values.iter().filter(|&&l| l > cut).count()
    }
}

pub(crate) fn first_non_finite(a: &DMatrix<f64>) -> Option<(usize, usize)> {
    for c in 0..a.ncols() {
        for r in 0..a.nrows() {
            if !a[(r, c)].is_finite() {
                return Some((r, c));
            }
        }
    }
    None
}

/// `diag(d) · a`
pub fn scale_rows(a: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[i])
}

/// `a · diag(d)`
pub fn scale_cols(a: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[j])
}

/// Reciprocal that maps zero to zero; used to undo weightings with empty nodes.
pub fn safe_recip(d: &DVector<f64>) -> DVector<f64> {
    d.map(|v| if v > 0.0 { 1.0 / v } else { 0.0 })
}
