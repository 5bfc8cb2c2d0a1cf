use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Central-difference gradient with step `cbrt(ε)·max(1, |θ_j|)`.
pub fn numerical_gradient<F>(g: F, params: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut x = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for j in 0..params.len() {
        let h = f64::EPSILON.cbrt() * params[j].abs().max(1.0);
        let up = params[j] + h;
        let dn = params[j] - h;
        x[j] = up;
        let fu = g(&x)?;
        x[j] = dn;
        let fd = g(&x)?;
        x[j] = params[j];
        let d = (fu - fd) / (up - dn);
        if !d.is_finite() {
            return Err(Error::NonFinite(format!("derivative with respect to parameter {j}")));
        }
        out.push(d);
    }
    Ok(out)
}

/// Value of `g` at `params` and its delta-method standard error under
/// `covariance`. A slightly negative variance from rounding is clamped to
/// zero.
pub fn delta_method<F>(g: F, params: &[f64], covariance: &DMatrix<f64>) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let p = params.len();
    if covariance.nrows() != p || covariance.ncols() != p {
        return Err(Error::dimension("delta-method covariance", p, covariance.nrows()));
    }
    let value = g(params)?;
    let grad = DVector::from_vec(numerical_gradient(&g, params)?);
    let var = (grad.transpose() * covariance * &grad)[(0, 0)];
    if var < 0.0 {
        log::warn!("delta-method variance {var:.3e} is negative; clamped to 0");
    }
    Ok((value, var.max(0.0).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn linear_function() {
        let v = DMatrix::from_row_slice(2, 2, &[0.09, 0.01, 0.01, 0.04]);
        let (val, se) = delta_method(|t| Ok(2.0 * t[0]), &[1.5, -1.0], &v).unwrap();
        assert_eq!(val, 3.0);
        assert!((se - 0.6).abs() < 1e-9);
    }

    #[test]
    fn cosine_at_right_angle() {
        let v = DMatrix::from_element(1, 1, 0.25);
        let (_, se) = delta_method(|t| Ok(t[0].cos()), &[FRAC_PI_2], &v).unwrap();
        assert!((se - 0.5).abs() < 1e-9);
    }

    #[test]
    fn identity_returns_diagonal_root() {
        let v = DMatrix::from_row_slice(2, 2, &[0.16, 0.02, 0.02, 0.09]);
        let (_, se) = delta_method(|t| Ok(t[1]), &[0.3, 0.7], &v).unwrap();
        assert_eq!(se, 0.3);
    }
}
