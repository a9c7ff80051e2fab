use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::MomentModel;

/// `E[∂h/∂θ]` (d×p) and `E[h hᵀ]` (d×d), analytic or sample averages.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrices {
    pub jacobian_mean: DMatrix<f64>,
    pub second_moment: DMatrix<f64>,
}

impl MomentMatrices {
    pub fn new(jacobian_mean: DMatrix<f64>, second_moment: DMatrix<f64>) -> Result<Self> {
        let d = jacobian_mean.nrows();
        if second_moment.nrows() != d || second_moment.ncols() != d {
            return Err(Error::Dimension {
                what: "second moment",
                left: second_moment.nrows(),
                right: d,
            });
        }
        Ok(Self {
            jacobian_mean,
            second_moment,
        })
    }

    pub fn from_sample(model: &MomentModel, theta: &[f64], data: &[f64]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Invalid("empty sample".into()));
        }
        let mut g = DMatrix::zeros(model.d, model.p);
        let mut v = DMatrix::zeros(model.d, model.d);
        for &x in data {
            g += model.jacobian(theta, x);
            let h = model.h(theta, x);
            v.ger(1.0, &h, &h, 1.0);
        }
        let n = data.len() as f64;
        Self::new(g / n, v / n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticInfo {
    pub info: DMatrix<f64>,
    /// `diag(Ĩ⁻¹)^{1/2} / √n`
    pub posterior_sd_pred: DVector<f64>,
}

/// `Ĩ = E[∂h/∂θ]ᵀ E[hhᵀ]⁻¹ E[∂h/∂θ]`.
pub fn asymptotic_information(model: &MomentModel, theta: &[f64], mm: &MomentMatrices, n: usize) -> Result<AsymptoticInfo> {
    model.check_theta(theta)?;
    if mm.jacobian_mean.shape() != (model.d, model.p) {
        return Err(Error::Dimension {
            what: "jacobian mean",
            left: mm.jacobian_mean.nrows(),
            right: model.d,
        });
    }
    let chol = mm
        .second_moment
        .clone()
        .cholesky()
        .ok_or(Error::Singular { what: "E[h hᵀ]" })?;
    let g = &mm.jacobian_mean;
    let info = g.transpose() * chol.solve(g);
    let info = (&info + info.transpose()) * 0.5;
    let inv = info.clone().cholesky().ok_or(Error::Singular { what: "information" })?.inverse();
    let nf = n as f64;
    let posterior_sd_pred = DVector::from_fn(model.p, |k, _| (inv[(k, k)] / nf).sqrt());
    Ok(AsymptoticInfo { info, posterior_sd_pred })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exponential_overid, mean_gaussian};
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    #[test]
    fn exponential_closed_form() {
        let mm = MomentMatrices::new(dmatrix![-1.0; 8.0], dmatrix![4.0, -32.0; -32.0, 320.0]).unwrap();
        let ai = asymptotic_information(&exponential_overid(), &[2.0], &mm, 500).unwrap();
        assert_abs_diff_eq!(ai.info[(0, 0)], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(ai.posterior_sd_pred[0], 0.0894427191, epsilon = 1e-9);
    }

    #[test]
    fn unit_variance_mean() {
        let mm = MomentMatrices::new(dmatrix![-1.0], dmatrix![1.0]).unwrap();
        let ai = asymptotic_information(&mean_gaussian(), &[0.0], &mm, 1).unwrap();
        assert_abs_diff_eq!(ai.info[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn scaling_h_cancels() {
        let a = MomentMatrices::new(dmatrix![-1.0; 8.0], dmatrix![4.0, -32.0; -32.0, 320.0]).unwrap();
        let b = MomentMatrices::new(&a.jacobian_mean * 2.0, &a.second_moment * 4.0).unwrap();
        let m = exponential_overid();
        let ia = asymptotic_information(&m, &[2.0], &a, 10).unwrap().info[(0, 0)];
        let ib = asymptotic_information(&m, &[2.0], &b, 10).unwrap().info[(0, 0)];
        assert_abs_diff_eq!(ia, ib, epsilon = 1e-14);
    }

    #[test]
    fn singular_second_moment() {
        let mm = MomentMatrices::new(dmatrix![-1.0; 1.0], dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap();
        assert!(asymptotic_information(&exponential_overid(), &[2.0], &mm, 10).is_err());
    }
}
