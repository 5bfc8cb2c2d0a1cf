use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::covariance::invert_symmetric;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Wald test of `R θ = 0`.
pub fn wald_test(r: &DMatrix<f64>, params: &[f64], covariance: &DMatrix<f64>) -> Result<WaldResult> {
    let p = params.len();
    if r.ncols() != p {
        return Err(Error::dimension("restriction matrix columns", p, r.ncols()));
    }
    if covariance.nrows() != p || covariance.ncols() != p {
        return Err(Error::dimension("Wald covariance", p, covariance.nrows()));
    }
    let q = r.nrows();
    if q == 0 {
        return Err(Error::Domain("restriction matrix has no rows".into()));
    }
    let sv = r.clone().svd(false, false).singular_values;
    let tol = sv.max() * (q.max(p) as f64) * f64::EPSILON;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank < q {
        return Err(Error::Domain(format!("restriction matrix has rank {rank} < {q} rows")));
    }
    let theta = DVector::from_column_slice(params);
    let rt = r * theta;
    let middle = invert_symmetric(&(r * covariance * r.transpose()), "R V Rᵀ")?;
    let statistic = (rt.transpose() * middle * &rt)[(0, 0)].max(0.0);
    let chi = ChiSquared::new(q as f64).map_err(|e| Error::Domain(e.to_string()))?;
    let p_value = chi.sf(statistic).clamp(0.0, 1.0);
    Ok(WaldResult {
        statistic,
        df: q,
        p_value,
    })
}

/// Restriction matrix selecting the given parameter indices.
pub fn selection_matrix(indices: &[usize], p: usize) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(indices.len(), p);
    for (row, &j) in indices.iter().enumerate() {
        r[(row, j)] = 1.0;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_give_zero_statistic() {
        let v = DMatrix::identity(2, 2);
        let w = wald_test(&DMatrix::identity(2, 2), &[0.0, 0.0], &v).unwrap();
        assert_eq!(w.statistic, 0.0);
        assert_eq!(w.p_value, 1.0);
        assert_eq!(w.df, 2);
    }

    #[test]
    fn rank_deficient_is_rejected() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert!(wald_test(&r, &[0.1, 0.2], &DMatrix::identity(2, 2)).is_err());
    }
}
