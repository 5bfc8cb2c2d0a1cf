//! Bivariate normal CDF by Drezner–Wesolowsky / Genz Gauss–Legendre
//! reduction with a fixed 20-point rule.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::normal::cdf;
use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;
const GL_ORDER: usize = 20;

/// Positive half of the Gauss–Legendre nodes on [-1, 1] with their weights.
fn gauss_legendre_half() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GL_ORDER).into_iter().filter(|&(x, _)| x > 0.0).collect())
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((x, w));
    }
    rule
}

/// `P(Z1 <= a, Z2 <= b)` for a standard bivariate normal with correlation
/// `rho`. Infinite limits are accepted.
pub fn bvn_cdf(a: f64, b: f64, rho: f64) -> Result<f64> {
    if a.is_nan() || b.is_nan() || rho.is_nan() {
        return Err(Error::NonFinite(format!("bvn_cdf({a}, {b}, {rho})")));
    }
    if rho.abs() >= 1.0 {
        return Err(Error::Domain(format!("bvn_cdf requires |rho| < 1, got {rho}")));
    }
    Ok(bvn(a, b, rho))
}

/// Unchecked bivariate CDF; `|rho| < 1` is assumed.
pub fn bvn(a: f64, b: f64, rho: f64) -> f64 {
    // Canonical argument order makes the function exactly symmetric.
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    if a == f64::NEG_INFINITY {
        return 0.0;
    }
    if b == f64::INFINITY {
        return cdf(a);
    }
    bvnu(-a, -b, rho).clamp(0.0, 1.0)
}

/// Upper orthant `P(Z1 > h, Z2 > k)`.
fn bvnu(h: f64, k: f64, r: f64) -> f64 {
    let rule = gauss_legendre_half();
    let mut hk = h * k;
    let mut k = k;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        let mut sum = 0.0;
        for &(x, w) in rule {
            for node in [1.0 - x, 1.0 + x] {
                let sn = (asr * node / 2.0).sin();
                sum += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return sum * asr / (2.0 * TWO_PI) + cdf(-h) * cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    let mut bvn = 0.0;
    if r.abs() < 1.0 {
        let a_sq = (1.0 - r) * (1.0 + r);
        let mut a = a_sq.sqrt();
        let b_sq = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * (-(b_sq / a_sq + hk) / 2.0).exp()
            * (1.0 - c * (b_sq - a_sq) * (1.0 - d * b_sq / 5.0) / 3.0 + c * d * a_sq * a_sq / 5.0);
        if hk > -160.0 {
            let b = b_sq.sqrt();
            bvn -= (-hk / 2.0).exp()
                * TWO_PI.sqrt()
                * cdf(-b / a)
                * b
                * (1.0 - c * b_sq * (1.0 - d * b_sq / 5.0) / 3.0);
        }
        a /= 2.0;
        for &(x, w) in rule {
            let xs = (a * (1.0 - x)).powi(2);
            let rs = (1.0 - xs).sqrt();
            bvn += a
                * w
                * ((-b_sq / (2.0 * xs) - hk / (1.0 + rs)).exp() / rs
                    - (-(b_sq / xs + hk) / 2.0).exp() * (1.0 + c * xs * (1.0 + d * xs)));
            let xs = a_sq * (1.0 + x).powi(2) / 4.0;
            let rs = (1.0 - xs).sqrt();
            bvn += a
                * w
                * (-(b_sq / xs + hk) / 2.0).exp()
                * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                    - (1.0 + c * xs * (1.0 + d * xs)));
        }
        bvn = -bvn / TWO_PI;
    }
    if r > 0.0 {
        bvn + cdf(-h.max(k))
    } else {
        let mut out = -bvn;
        if k > h {
            if h < 0.0 {
                out += cdf(k) - cdf(h);
            } else {
                out += cdf(-h) - cdf(-k);
            }
        }
        out
    }
}
