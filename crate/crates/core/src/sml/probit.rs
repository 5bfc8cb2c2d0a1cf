use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mvn::normal::{cdf, pdf};

/// Single-equation probit maximum-likelihood fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbitFit {
    pub coefficients: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_obs: usize,
    /// Inverse observed information; empty when not converged.
    #[serde(with = "crate::matrix_serde")]
    pub covariance: DMatrix<f64>,
}

impl ProbitFit {
    pub fn standard_errors(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// `φ(x)/Φ(x)`, stable in the lower tail.
#[inline]
pub fn inverse_mills(x: f64) -> f64 {
    if x > -30.0 {
        pdf(x) / cdf(x)
    } else {
        let x2 = x * x;
        -x / (1.0 - 1.0 / x2 + 3.0 / (x2 * x2))
    }
}

#[inline]
fn ln_cdf(x: f64) -> f64 {
    if x > -30.0 {
        cdf(x).ln()
    } else {
        // Leading terms of the Mills-ratio expansion.
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (1.0 - 1.0 / x2).ln()
    }
}

fn loglik(x: &DMatrix<f64>, y: &[f64], rows: &[usize], beta: &DVector<f64>) -> f64 {
    rows.iter()
        .map(|&i| {
            let z: f64 = x.row(i).iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            let q = 2.0 * y[i] - 1.0;
            ln_cdf(q * z)
        })
        .sum()
}

/// Newton–Raphson probit on the rows where `mask` is true (all rows when
/// `None`). Non-convergence is reported, not an error.
pub fn fit_probit(x: &DMatrix<f64>, y: &[f64], mask: Option<&[bool]>) -> Result<ProbitFit> {
    let n = x.nrows();
    let k = x.ncols();
    if y.len() != n {
        return Err(Error::dimension("probit outcome", n, y.len()));
    }
    let rows: Vec<usize> = (0..n).filter(|&i| mask.is_none_or(|m| m[i])).collect();
    if rows.is_empty() {
        return Err(Error::Numerical("probit on an empty sample".into()));
    }
    if let Some(&i) = rows.iter().find(|&&i| !(y[i] == 0.0 || y[i] == 1.0)) {
        return Err(Error::Row {
            row: i,
            message: format!("probit outcome {} is not 0/1", y[i]),
        });
    }
    let mut beta = DVector::zeros(k);
    let mut ll = loglik(x, y, &rows, &beta);
    let mut converged = false;
    let mut iterations = 0;
    let mut info = DMatrix::zeros(k, k);
    for it in 1..=100 {
        iterations = it;
        let mut grad = DVector::zeros(k);
        info.fill(0.0);
        for &i in &rows {
            let xi = x.row(i);
            let z: f64 = xi.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            let q = 2.0 * y[i] - 1.0;
            let lam = q * inverse_mills(q * z);
            let w = lam * (lam + z);
            for a in 0..k {
                grad[a] += lam * xi[a];
                for b in 0..=a {
                    info[(a, b)] += w * xi[a] * xi[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        let Some(chol) = info.clone().cholesky() else {
            break;
        };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &beta + &step * t;
            let ll_trial = loglik(x, y, &rows, &trial);
            if ll_trial.is_finite() && ll_trial >= ll - 1e-12 * ll.abs() {
                let change = (ll_trial - ll).abs();
                beta = trial;
                ll = ll_trial;
                accepted = true;
                if step.amax() * t < 1e-10 || (change < 1e-12 && grad.amax() < 1e-6) {
                    converged = true;
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted || converged {
            converged = converged || grad.amax() < 1e-6;
            break;
        }
        if beta.amax() > 50.0 {
            // Coefficients diverging: separated data.
            break;
        }
    }
    // Rows predicted with certainty signal (quasi-)separation: the optimum
    // is at infinity even when the steps have become small.
    if converged
        && rows.iter().any(|&i| {
            let z: f64 = x.row(i).iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            (2.0 * y[i] - 1.0) * z > 8.0
        })
    {
        converged = false;
    }
    let covariance = if converged {
        info.clone().cholesky().map(|c| c.inverse()).unwrap_or_else(|| DMatrix::zeros(0, 0))
    } else {
        DMatrix::zeros(0, 0)
    };
    Ok(ProbitFit {
        coefficients: beta.as_slice().to_vec(),
        log_likelihood: ll,
        iterations,
        converged,
        n_obs: rows.len(),
        covariance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only_recovers_quantile() {
        // 84134 ones out of 100000: Φ⁻¹(0.84134) ≈ 1.0.
        let n = 100_000;
        let x = DMatrix::from_element(n, 1, 1.0);
        let y: Vec<f64> = (0..n).map(|i| if i < 84_134 { 1.0 } else { 0.0 }).collect();
        let f = fit_probit(&x, &y, None).unwrap();
        assert!(f.converged);
        assert!((f.coefficients[0] - 1.0).abs() < 1e-4);
        let half: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let f = fit_probit(&x, &half, None).unwrap();
        assert!(f.coefficients[0].abs() < 1e-12);
    }

    #[test]
    fn separated_data_does_not_converge() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -1.0, 1.0, -2.0, 1.0, 1.0, 1.0, 2.0]);
        let y = [0.0, 0.0, 1.0, 1.0];
        let f = fit_probit(&x, &y, None).unwrap();
        assert!(!f.converged);
    }

    #[test]
    fn mills_ratio_is_continuous_at_switch() {
        let a = inverse_mills(-30.0 + 1e-9);
        let b = inverse_mills(-30.0 - 1e-9);
        assert!((a - b).abs() / a < 1e-6);
    }
}
