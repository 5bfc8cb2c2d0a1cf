//! Geweke–Hajivassiliou–Keane simulator for `P(Z <= upper)` with
//! `Z ~ N(0, L Lᵀ)`.

use super::corr::CholeskyFactor;
use super::draws::DrawMatrix;
use super::normal::{cdf, quantile};
use crate::error::{Error, Result};

/// Simulated probabilities are floored here before logs are taken.
pub const PROB_FLOOR: f64 = 1e-300;

// Smallest argument handed to the quantile inside the recursion.
const TINY: f64 = f64::MIN_POSITIVE;

/// GHK estimate of a rectangle probability with upper limits only.
///
/// Coordinates are processed in the given order; the result is a
/// deterministic function of the draw block.
pub fn ghk_rectangle(upper: &[f64], factor: &CholeskyFactor, draws: &DrawMatrix) -> Result<f64> {
    let k = factor.dim();
    if upper.len() != k {
        return Err(Error::dimension("GHK limits", k, upper.len()));
    }
    if k == 0 {
        return Err(Error::Domain("GHK needs at least one dimension".into()));
    }
    if draws.dims() != k - 1 {
        return Err(Error::dimension("GHK draw dimensions", k - 1, draws.dims()));
    }
    if upper.iter().any(|a| a.is_nan()) {
        return Err(Error::NonFinite("GHK limit is NaN".into()));
    }
    let l = factor.as_matrix();
    let mut eta = vec![0.0; k];
    let mut total = 0.0;
    let mut count = 0usize;
    let mut simulate = |u: &mut dyn Iterator<Item = f64>| {
        let mut prob = 1.0;
        for j in 0..k {
            let mut mean = 0.0;
            for (m, e) in eta.iter().enumerate().take(j) {
                mean += l[(j, m)] * e;
            }
            let p = cdf((upper[j] - mean) / l[(j, j)]);
            prob *= p;
            if prob == 0.0 {
                break;
            }
            if j + 1 < k {
                let uj = u.next().expect("draw row has k-1 entries");
                eta[j] = quantile((uj * p).max(TINY));
            }
        }
        prob
    };
    for r in 0..draws.draws() {
        let row = draws.row(r);
        total += simulate(&mut row.iter().copied());
        count += 1;
        if draws.antithetic() {
            total += simulate(&mut row.iter().map(|u| 1.0 - u));
            count += 1;
        }
    }
    if count == 0 {
        // K = 1 with an empty block: the estimate is exact anyway.
        return Ok(cdf(upper[0]).max(PROB_FLOOR));
    }
    Ok((total / count as f64).clamp(PROB_FLOOR, 1.0))
}

/// Strictly-lower entries of a 3×3 factor whose first row is `(1, 0, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lower3 {
    pub l10: f64,
    pub l11: f64,
    pub l20: f64,
    pub l21: f64,
    pub l22: f64,
}

impl Lower3 {
    pub fn from_factor(f: &CholeskyFactor) -> Self {
        let m = f.as_matrix();
        debug_assert_eq!(m.nrows(), 3);
        Self {
            l10: m[(1, 0)],
            l11: m[(1, 1)],
            l20: m[(2, 0)],
            l21: m[(2, 1)],
            l22: m[(2, 2)],
        }
    }

    /// Factor of `D Σ D` for signs `(s0, s1, s2)`.
    #[inline]
    pub fn flipped(&self, s: [f64; 3]) -> Self {
        Self {
            l10: self.l10 * s[0] * s[1],
            l11: self.l11,
            l20: self.l20 * s[0] * s[2],
            l21: self.l21 * s[1] * s[2],
            l22: self.l22,
        }
    }
}

/// Trivariate GHK specialised for the likelihood hot loop. Equivalent to
/// [`ghk_rectangle`] with `K = 3`, before flooring.
#[inline]
pub(crate) fn ghk3(a: [f64; 3], l: &Lower3, draws: &DrawMatrix) -> f64 {
    let p0 = cdf(a[0]);
    if p0 == 0.0 {
        return 0.0;
    }
    let values = draws.values();
    let mut sum = 0.0;
    let step = |u0: f64, u1: f64| {
        let e0 = quantile((u0 * p0).max(TINY));
        let p1 = cdf((a[1] - l.l10 * e0) / l.l11);
        if p1 == 0.0 {
            return 0.0;
        }
        let e1 = quantile((u1 * p1).max(TINY));
        p1 * cdf((a[2] - l.l20 * e0 - l.l21 * e1) / l.l22)
    };
    for uv in values.chunks_exact(2) {
        sum += step(uv[0], uv[1]);
        if draws.antithetic() {
            sum += step(1.0 - uv[0], 1.0 - uv[1]);
        }
    }
    let n = if draws.antithetic() {
        2 * draws.draws()
    } else {
        draws.draws()
    };
    p0 * sum / n as f64
}
