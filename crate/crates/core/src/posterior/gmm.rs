use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::MomentModel;

/// Sample mean `ḡ` and uncentered second moment `V_n` of `h(θ, x_i)`.
pub fn sample_moments(data: &[f64], model: &MomentModel, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if data.is_empty() {
        return Err(Error::Invalid("empty sample".into()));
    }
    let d = model.d;
    let mut bar = DVector::zeros(d);
    let mut v = DMatrix::zeros(d, d);
    for &x in data {
        let h = model.h(theta, x);
        bar += &h;
        v.ger(1.0, &h, &h, 1.0);
    }
    let n = data.len() as f64;
    Ok((bar / n, v / n))
}

/// `-½ (n^{-1/2} Σ h)ᵀ V_n⁻¹ (n^{-1/2} Σ h)`, the continuous-updating GMM quasi-log-likelihood.
pub fn log_quasi_lik_cu_gmm(data: &[f64], model: &MomentModel, theta: &[f64]) -> Result<f64> {
    let (bar, v) = sample_moments(data, model, theta)?;
    let singular = || Error::Evaluation {
        theta: theta.to_vec(),
        reason: "V_n(θ) is singular".into(),
    };
    if v.determinant().abs() <= f64::EPSILON * v.norm().powi(v.nrows() as i32) {
        return Err(singular());
    }
    // LU keeps hand-checkable cases exact where a Cholesky solve rounds
    let solved = v.lu().solve(&bar).ok_or_else(singular)?;
    let n = data.len() as f64;
    Ok(-0.5 * n * bar.dot(&solved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exponential_overid, mean_gaussian};

    #[test]
    fn hand_values() {
        let m = mean_gaussian();
        assert_eq!(log_quasi_lik_cu_gmm(&[0.0, 2.0], &m, &[1.0]).unwrap(), 0.0);
        assert_eq!(log_quasi_lik_cu_gmm(&[0.0, 2.0], &m, &[0.0]).unwrap(), -0.5);
        assert_eq!(log_quasi_lik_cu_gmm(&[0.0, 2.0], &m, &[2.0]).unwrap(), -0.5);
    }

    #[test]
    fn singular_second_moment_names_theta() {
        let m = mean_gaussian();
        match log_quasi_lik_cu_gmm(&[1.0, 1.0], &m, &[1.0]) {
            Err(Error::Evaluation { theta, .. }) => assert_eq!(theta, vec![1.0]),
            other => panic!("{other:?}"),
        }
        // two moments from a single point are rank one
        assert!(log_quasi_lik_cu_gmm(&[3.0], &exponential_overid(), &[2.0]).is_err());
    }
}
