use std::ops::Deref;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on a closed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    step: f64,
    lo: f64,
    hi: f64,
}

impl Grid {
    pub fn uniform(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Invalid(format!("grid needs at least 2 points, got {m}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Invalid(format!("grid bounds [{lo}, {hi}] are not an interval")));
        }
        let step = (hi - lo) / (m - 1) as f64;
        let mut points: Vec<f64> = (0..m).map(|i| lo + step * i as f64).collect();
        points[m - 1] = hi;
        Ok(Self { points, step, lo, hi })
    }

    /// Grid on `[min(data) - 1, max(data) + 1]`.
    pub fn around_data(data: &[f64], m: usize) -> Result<Self> {
        let (lo, hi) = data_range(data)?;
        Self::uniform(lo - 1.0, hi + 1.0, m)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let m = self.points.len();
        let mut w = vec![self.step; m];
        w[0] *= 0.5;
        w[m - 1] *= 0.5;
        w
    }
}

pub(crate) fn data_range(data: &[f64]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Invalid("empty data".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in data {
        if !x.is_finite() {
            return Err(Error::Invalid(format!("non-finite observation {x}")));
        }
        lo = lo.min(x);
        hi = hi.max(x);
    }
    Ok((lo, hi))
}

/// A function sampled on the nodes of a measure.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    values: DVector<f64>,
}

impl GridFn {
    pub fn new(values: DVector<f64>) -> Self {
        Self { values }
    }

    pub fn from_fn(nodes: &[f64], f: impl Fn(f64) -> f64) -> Self {
        Self::new(DVector::from_iterator(nodes.len(), nodes.iter().map(|&x| f(x))))
    }

    pub fn constant(len: usize, value: f64) -> Self {
        Self::new(DVector::from_element(len, value))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.values
    }
}

impl Deref for GridFn {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.values
    }
}

impl From<Vec<f64>> for GridFn {
    fn from(v: Vec<f64>) -> Self {
        Self::new(DVector::from_vec(v))
    }
}

impl From<DVector<f64>> for GridFn {
    fn from(v: DVector<f64>) -> Self {
        Self::new(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureSource {
    /// Density on a uniform grid integrated by the trapezoid rule.
    Grid { grid: Grid, density: Vec<f64> },
    /// Sample average over the first `n` nodes. Any further nodes carry zero
    /// weight; functions are still evaluated there.
    Empirical { n: usize },
}

/// Discrete measure: nodes with non-negative quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    nodes: Vec<f64>,
    weights: DVector<f64>,
    source: MeasureSource,
}

impl Measure {
    pub fn on_grid(grid: Grid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::Dimension {
                what: "density",
                left: density.len(),
                right: grid.len(),
            });
        }
        if let Some(i) = density.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Invalid(format!(
                "density at node {i} is {} (must be finite and non-negative)",
                density[i]
            )));
        }
        let trap = grid.trapezoid_weights();
        let weights = DVector::from_iterator(grid.len(), trap.iter().zip(&density).map(|(w, d)| w * d));
        Ok(Self {
            nodes: grid.points().to_vec(),
            weights,
            source: MeasureSource::Grid { grid, density },
        })
    }

    pub fn from_density(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let density = grid.points().iter().map(|&x| f(x)).collect();
        Self::on_grid(grid, density)
    }

    pub fn lebesgue(grid: Grid) -> Self {
        let m = grid.len();
        Self::on_grid(grid, vec![1.0; m]).expect("unit density is valid")
    }

    pub fn empirical(data: &[f64]) -> Result<Self> {
        Self::empirical_with_carried(data, &[])
    }

    pub fn empirical_with_carried(data: &[f64], carried: &[f64]) -> Result<Self> {
        data_range(data)?;
        let n = data.len();
        let mut nodes = data.to_vec();
        nodes.extend_from_slice(carried);
        let mut weights = DVector::zeros(nodes.len());
        weights.rows_mut(0, n).fill(1.0 / n as f64);
        Ok(Self {
            nodes,
            weights,
            source: MeasureSource::Empirical { n },
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn source(&self) -> &MeasureSource {
        &self.source
    }

    pub fn grid(&self) -> Option<&Grid> {
        match &self.source {
            MeasureSource::Grid { grid, .. } => Some(grid),
            MeasureSource::Empirical { .. } => None,
        }
    }

    pub fn density(&self) -> Option<&[f64]> {
        match &self.source {
            MeasureSource::Grid { density, .. } => Some(density),
            MeasureSource::Empirical { .. } => None,
        }
    }

    pub fn is_empirical(&self) -> bool {
        matches!(self.source, MeasureSource::Empirical { .. })
    }

    /// Smallest interval containing every node.
    pub fn domain(&self) -> (f64, f64) {
        let lo = self.nodes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.nodes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.sum()
    }

    /// Same nodes, weights multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        match &self.source {
            MeasureSource::Grid { grid, density } => {
                Self::on_grid(grid.clone(), density.iter().map(|d| d * factor).collect())
            }
            MeasureSource::Empirical { .. } => Err(Error::Invalid("cannot rescale an empirical measure".into())),
        }
    }

    pub(crate) fn check_len(&self, what: &'static str, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::Dimension {
                what,
                left: len,
                right: self.len(),
            });
        }
        Ok(())
    }

    pub fn inner(&self, f: &DVector<f64>, g: &DVector<f64>) -> Result<f64> {
        self.check_len("left function", f.len())?;
        self.check_len("right function", g.len())?;
        Ok(weighted_dot(f, g, &self.weights))
    }

    pub fn integral(&self, f: &DVector<f64>) -> Result<f64> {
        self.check_len("integrand", f.len())?;
        Ok(f.dot(&self.weights))
    }

    pub fn norm(&self, f: &DVector<f64>) -> Result<f64> {
        Ok(self.inner(f, f)?.max(0.0).sqrt())
    }

    /// Square roots of the weights; the isometry into plain Euclidean space.
    pub fn sqrt_weights(&self) -> DVector<f64> {
        self.weights.map(f64::sqrt)
    }
}

pub(crate) fn weighted_dot(f: &DVector<f64>, g: &DVector<f64>, w: &DVector<f64>) -> f64 {
    f.iter().zip(g.iter()).zip(w.iter()).map(|((a, b), c)| a * b * c).sum()
}

/// Quadrature approximation of `∫ f g dm`.
pub fn inner_product(f: &GridFn, g: &GridFn, m: &Measure) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::Dimension {
            what: "inner product operands",
            left: f.len(),
            right: g.len(),
        });
    }
    m.inner(f, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_grid_hits_both_ends() {
        let g = Grid::uniform(-1.0, 1.0, 1001).unwrap();
        assert_eq!(g.points()[0], -1.0);
        assert_eq!(g.points()[1000], 1.0);
        assert_abs_diff_eq!(g.step(), 0.002, epsilon = 1e-15);
        assert!(g.points().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn degenerate_grids_are_rejected() {
        assert!(Grid::uniform(0.0, 1.0, 1).is_err());
        assert!(Grid::uniform(1.0, 1.0, 10).is_err());
        assert!(Grid::uniform(0.0, f64::NAN, 10).is_err());
    }

    #[test]
    fn constant_integrates_exactly() {
        let m = Measure::lebesgue(Grid::uniform(-1.0, 1.0, 11).unwrap());
        let one = GridFn::constant(11, 1.0);
        assert_abs_diff_eq!(inner_product(&one, &one, &m).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn odd_integrand_vanishes() {
        let m = Measure::lebesgue(Grid::uniform(-1.0, 1.0, 101).unwrap());
        let one = GridFn::constant(101, 1.0);
        let x = GridFn::from_fn(m.nodes(), |x| x);
        assert_abs_diff_eq!(inner_product(&one, &x, &m).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn square_on_fine_grid() {
        // trapezoid error for ∫x² on [-1, 1] is exactly h²/3
        let m = Measure::lebesgue(Grid::uniform(-1.0, 1.0, 1001).unwrap());
        let x = GridFn::from_fn(m.nodes(), |x| x);
        let h: f64 = 0.002;
        assert_abs_diff_eq!(inner_product(&x, &x, &m).unwrap(), 2.0 / 3.0 + h * h / 3.0, epsilon = 1e-13);
        let fine = Measure::lebesgue(Grid::uniform(-1.0, 1.0, 2001).unwrap());
        let x = GridFn::from_fn(fine.nodes(), |x| x);
        assert_abs_diff_eq!(inner_product(&x, &x, &fine).unwrap(), 2.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn trapezoid_error_is_second_order() {
        let err = |m: usize| {
            let meas = Measure::lebesgue(Grid::uniform(0.0, 2.0, m).unwrap());
            let f = GridFn::from_fn(meas.nodes(), f64::exp);
            let one = GridFn::constant(m, 1.0);
            (inner_product(&f, &one, &meas).unwrap() - (2f64.exp() - 1.0)).abs()
        };
        let ratio = err(101) / err(201);
        assert!((ratio - 4.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn length_mismatch_names_both_lengths() {
        let m = Measure::lebesgue(Grid::uniform(0.0, 1.0, 5).unwrap());
        let a = GridFn::constant(5, 1.0);
        let b = GridFn::constant(4, 1.0);
        let err = inner_product(&a, &b, &m).unwrap_err().to_string();
        assert!(err.contains('5') && err.contains('4'), "{err}");
    }

    #[test]
    fn carried_nodes_have_no_weight() {
        let m = Measure::empirical_with_carried(&[1.0, 3.0], &[10.0, 20.0]).unwrap();
        assert_eq!(m.len(), 4);
        assert_abs_diff_eq!(m.total_mass(), 1.0, epsilon = 1e-15);
        let x = GridFn::from_fn(m.nodes(), |x| x);
        assert_abs_diff_eq!(m.integral(&x).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn negative_density_is_rejected() {
        let g = Grid::uniform(0.0, 1.0, 3).unwrap();
        assert!(Measure::on_grid(g, vec![1.0, -0.1, 1.0]).is_err());
    }
}
