//! Reference implementations used as test oracles. They share no code
//! with the library: univariate Φ is a power series in the centre and a
//! continued fraction in the tails, everything else is plain adaptive
//! quadrature.

#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};

pub fn phi(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > 0.0 {
        return 1.0 - phi(-x);
    }
    if x > -1.5 {
        // Φ(x) = 1/2 + φ(x) Σ x^(2n+1) / (2n+1)!!
        let (mut term, mut sum, mut n) = (x, x, 0.0);
        while term.abs() > 1e-18 * sum.abs() {
            n += 1.0;
            term *= x * x / (2.0 * n + 1.0);
            sum += term;
        }
        return 0.5 + density(x) * sum;
    }
    if x < -40.0 {
        return 0.0;
    }
    // Mills ratio continued fraction, evaluated bottom-up.
    let z = -x;
    let mut frac = z;
    for k in (1..=200).rev() {
        frac = z + k as f64 / frac;
    }
    density(x) / frac
}

/// statrs' normal CDF, for sanity checks of the oracle itself.
pub fn phi_statrs(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Adaptive Simpson on [a, b] to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        // Relative floor: rounding noise never forces further bisection.
        if depth == 0 || diff.abs() <= 15.0 * tol.max(1e-15 * (left + right).abs()) {
            left + right + diff / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Bivariate normal density with unit variances.
pub fn bvn_density(x: f64, y: f64, r: f64) -> f64 {
    let q = (x * x - 2.0 * r * x * y + y * y) / (1.0 - r * r);
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * (1.0 - r * r).sqrt())
}

/// `P(X ≤ a, Y ≤ b)` as `∫_{-∞}^{a} φ(x) Φ((b - ρx)/√(1-ρ²)) dx`.
pub fn bvn_oracle(a: f64, b: f64, rho: f64) -> f64 {
    bvn_oracle_tol(a, b, rho, 1e-16)
}

fn bvn_oracle_tol(a: f64, b: f64, rho: f64, tol: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return 0.0;
    }
    if a == f64::INFINITY {
        return phi(b);
    }
    if b == f64::INFINITY {
        return phi(a);
    }
    let s = ((1.0 - rho) * (1.0 + rho)).sqrt();
    let f = |x: f64| density(x) * phi((b - rho * x) / s);
    // Breakpoints at the mode of φ and where the conditional CDF switches.
    let mut cuts = vec![-12.0, 0.0];
    if rho != 0.0 {
        cuts.push((b / rho).clamp(-12.0, 12.0));
    }
    cuts.retain(|&c| c < a);
    cuts.push(a.min(12.0));
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2).map(|w| simpson(&f, w[0], w[1], tol)).sum()
}

/// `P(X₁ ≤ a₁, X₂ ≤ a₂, X₃ ≤ a₃)` for unit-variance normals with
/// correlations `r = [ρ₁₀, ρ₂₀, ρ₂₁]`, by integrating the conditional
/// bivariate probability over the first coordinate. Accurate to about
/// 1e-10, far below any GHK tolerance it is compared with.
pub fn tvn_oracle(a: [f64; 3], r: [f64; 3]) -> f64 {
    let (r10, r20, r21) = (r[0], r[1], r[2]);
    let s1 = (1.0 - r10 * r10).sqrt();
    let s2 = (1.0 - r20 * r20).sqrt();
    let rc = (r21 - r10 * r20) / (s1 * s2);
    let f = |x: f64| density(x) * bvn_oracle_tol((a[1] - r10 * x) / s1, (a[2] - r20 * x) / s2, rc, 1e-11);
    let hi = a[0].min(9.0);
    if hi <= -9.0 {
        return 0.0;
    }
    // Split at zero so the peak of φ is resolved.
    if hi > 0.0 {
        simpson(&f, -9.0, 0.0, 1e-10) + simpson(&f, 0.0, hi, 1e-10)
    } else {
        simpson(&f, -9.0, hi, 1e-10)
    }
}

/// Correlations `[ρ₁₀, ρ₂₀, ρ₂₁]` from a random factor with unit rows.
pub fn random_correlations(rng: &mut impl rand::Rng) -> [f64; 3] {
    loop {
        let g: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let row = |i: usize| {
            let v = [g[3 * i], g[3 * i + 1], g[3 * i + 2]];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n, v[1] / n, v[2] / n]
        };
        let (x, y, z) = (row(0), row(1), row(2));
        let dot = |p: [f64; 3], q: [f64; 3]| p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
        let r = [dot(x, y), dot(x, z), dot(y, z)];
        let det = 1.0 - r[0] * r[0] - r[1] * r[1] - r[2] * r[2] + 2.0 * r[0] * r[1] * r[2];
        if det > 1e-3 {
            return r;
        }
    }
}

pub fn correlation_matrix(r: [f64; 3]) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(3, 3, &[1.0, r[0], r[1], r[0], 1.0, r[2], r[1], r[2], 1.0])
}
