//! Grids, discrete measures, quadrature inner products and orthonormal bases.

pub mod grid;
pub mod linalg;
pub mod orthonormal;

pub use grid::{inner_product, Grid, GridFn, Measure, MeasureSource};
pub use linalg::SymEigen;
pub use orthonormal::{
    complete_basis, gram_schmidt, gram_schmidt_with_coefficients, BasisFamily, CompletedBasis, Orthonormalized,
};
