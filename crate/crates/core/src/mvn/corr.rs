//! Hyperspherical parametrization of correlation matrices.
//!
//! Row `i` of the Cholesky factor is a unit vector described by `i` angles in
//! (0, π):
//!
//! ```text
//! L[i][0] = cos θ[i][0]
//! L[i][j] = cos θ[i][j] · Π_{m<j} sin θ[i][m]      (0 < j < i)
//! L[i][i] = Π_{m<i} sin θ[i][m]
//! ```
//!
//! Any angle vector inside the open box yields a valid, positive-definite
//! correlation matrix with a strictly positive diagonal factor.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Angles for the strictly-lower Cholesky entries, stored row by row:
/// `(θ10), (θ20, θ21), ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationParams {
    dim: usize,
    angles: Vec<f64>,
}

/// Lower-triangular factor with unit-norm rows.
#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactor(DMatrix<f64>);

pub const fn angle_count(dim: usize) -> usize {
    dim * (dim.saturating_sub(1)) / 2
}

impl CorrelationParams {
    pub fn new(dim: usize, angles: Vec<f64>) -> Result<Self> {
        if angles.len() != angle_count(dim) {
            return Err(Error::dimension("correlation angles", angle_count(dim), angles.len()));
        }
        for (i, &a) in angles.iter().enumerate() {
            if !(a > 0.0 && a < PI) {
                return Err(Error::Domain(format!("angle {i} = {a} outside (0, pi)")));
            }
        }
        Ok(Self { dim, angles })
    }

    /// All angles π/2: the identity correlation matrix.
    pub fn independent(dim: usize) -> Self {
        Self {
            dim,
            angles: vec![PI / 2.0; angle_count(dim)],
        }
    }

    /// Inverse map from a positive-definite correlation matrix.
    pub fn from_correlation(corr: &DMatrix<f64>) -> Result<Self> {
        let dim = corr.nrows();
        if corr.ncols() != dim {
            return Err(Error::dimension("correlation matrix columns", dim, corr.ncols()));
        }
        for i in 0..dim {
            if (corr[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("diagonal entry {i} is {}", corr[(i, i)])));
            }
        }
        let chol = corr
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Domain("correlation matrix is not positive definite".into()))?;
        let l = chol.l();
        let mut angles = Vec::with_capacity(angle_count(dim));
        for i in 1..dim {
            let norm = l.row(i).norm();
            let mut sin_prod = 1.0;
            for j in 0..i {
                let c = if sin_prod > 0.0 {
                    (l[(i, j)] / norm / sin_prod).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
                let theta = c.acos();
                angles.push(theta.clamp(f64::EPSILON, PI - f64::EPSILON));
                sin_prod *= theta.sin();
            }
        }
        Self::new(dim, angles)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn factor(&self) -> CholeskyFactor {
        let mut l = DMatrix::zeros(self.dim, self.dim);
        l[(0, 0)] = 1.0;
        let mut idx = 0;
        for i in 1..self.dim {
            let mut sin_prod = 1.0;
            for j in 0..i {
                let theta = self.angles[idx];
                idx += 1;
                l[(i, j)] = cos_angle(theta) * sin_prod;
                sin_prod *= theta.sin();
            }
            l[(i, i)] = sin_prod;
        }
        CholeskyFactor(l)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        self.factor().correlation()
    }

    /// Off-diagonal correlations in the same row-by-row order as the angles.
    pub fn correlations(&self) -> Vec<f64> {
        let m = self.matrix();
        let mut out = Vec::with_capacity(self.angles.len());
        for i in 1..self.dim {
            for j in 0..i {
                out.push(m[(i, j)]);
            }
        }
        out
    }
}

impl CholeskyFactor {
    /// Validates a user-supplied factor: lower triangular, unit-norm rows,
    /// positive diagonal.
    pub fn new(l: DMatrix<f64>) -> Result<Self> {
        let n = l.nrows();
        if l.ncols() != n {
            return Err(Error::dimension("Cholesky factor columns", n, l.ncols()));
        }
        for i in 0..n {
            if l[(i, i)] <= 0.0 {
                return Err(Error::Domain(format!("non-positive diagonal at {i}")));
            }
            for j in i + 1..n {
                if l[(i, j)] != 0.0 {
                    return Err(Error::Domain("factor is not lower triangular".into()));
                }
            }
            if (l.row(i).norm() - 1.0).abs() > 1e-10 {
                return Err(Error::Domain(format!("row {i} does not have unit norm")));
            }
        }
        Ok(Self(l))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn correlation(&self) -> DMatrix<f64> {
        let mut m = &self.0 * self.0.transpose();
        // Unit-norm rows give a unit diagonal up to rounding; pin it.
        for i in 0..m.nrows() {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Factor of `D Σ D` for a diagonal sign matrix `D`.
    pub fn sign_flipped(&self, signs: &[f64]) -> Self {
        let mut l = self.0.clone();
        for i in 0..l.nrows() {
            for j in 0..=i {
                l[(i, j)] *= signs[i] * signs[j];
            }
        }
        Self(l)
    }
}

/// Correlation matrix and factor implied by angle parameters.
pub fn correlation_from_angles(params: &CorrelationParams) -> Result<(DMatrix<f64>, CholeskyFactor)> {
    // Re-validate: the fields may have been deserialized.
    let params = CorrelationParams::new(params.dim, params.angles.clone())?;
    let factor = params.factor();
    Ok((factor.correlation(), factor))
}

/// `cos θ` evaluated as `sin(π/2 − θ)`: exact zero at θ = π/2 and more
/// accurate near it.
#[inline]
pub fn cos_angle(theta: f64) -> f64 {
    (std::f64::consts::FRAC_PI_2 - theta).sin()
}

/// Maps an unconstrained real to an angle in (0, π); zero maps to π/2.
#[inline]
pub fn angle_from_free(t: f64) -> f64 {
    PI / (1.0 + (-t).exp())
}

#[inline]
pub fn free_from_angle(theta: f64) -> f64 {
    let s = theta / PI;
    (s / (1.0 - s)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_angles_give_identity() {
        let p = CorrelationParams::independent(3);
        let (m, _) = correlation_from_angles(&p).unwrap();
        assert!((m - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn two_by_two_is_cosine() {
        let theta = 1.1;
        let p = CorrelationParams::new(2, vec![theta]).unwrap();
        let m = p.matrix();
        assert!((m[(1, 0)] - theta.cos()).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_angles() {
        assert!(CorrelationParams::new(2, vec![0.0]).is_err());
        assert!(CorrelationParams::new(2, vec![PI]).is_err());
        assert!(CorrelationParams::new(3, vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn free_angle_map_round_trip() {
        assert_eq!(angle_from_free(0.0), PI / 2.0);
        for &t in &[-5.0, -0.3, 0.0, 1.7, 8.0] {
            assert!((free_from_angle(angle_from_free(t)) - t).abs() < 1e-10);
        }
    }

    #[test]
    fn sign_flip_matches_dsd() {
        let p = CorrelationParams::new(3, vec![1.0, 2.0, 0.7]).unwrap();
        let f = p.factor();
        let signs = [1.0, -1.0, -1.0];
        let flipped = f.sign_flipped(&signs).correlation();
        let m = p.matrix();
        for i in 0..3 {
            for j in 0..3 {
                assert!((flipped[(i, j)] - signs[i] * signs[j] * m[(i, j)]).abs() < 1e-15);
            }
        }
    }
}
