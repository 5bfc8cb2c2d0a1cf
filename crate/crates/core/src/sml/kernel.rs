//! Per-observation log-likelihood and its derivatives with respect to the
//! six local parameters `(b_f, b_E, b_c, t10, t20, t21)`: the three linear
//! indices and the three free correlation parameters.
//!
//! In bivariate mode only `b_f`, `b_c` and `t10` are used.

use crate::mvn::bvn::bvn;
use crate::mvn::corr::{angle_from_free, cos_angle};
use crate::mvn::ghk::{Lower3, PROB_FLOOR};
use crate::mvn::normal::{cdf, quantile};
use crate::mvn::DrawMatrix;
use crate::model::params::FREE_BOUND;

pub const LOCAL: usize = 6;
pub type Local = [f64; LOCAL];

const TINY: f64 = f64::MIN_POSITIVE;

/// Step for central differences of the local parameters.
#[inline]
pub fn fd_step(v: f64) -> f64 {
    f64::EPSILON.cbrt() * v.abs().max(1.0)
}

#[inline]
pub fn angle(t: f64) -> f64 {
    angle_from_free(t.clamp(-FREE_BOUND, FREE_BOUND))
}

/// Unflipped factor entries from the three free parameters, computed in the
/// same order as the general hyperspherical map.
#[inline]
pub fn lower3(t10: f64, t20: f64, t21: f64) -> Lower3 {
    let (a10, a20, a21) = (angle(t10), angle(t20), angle(t21));
    let s20 = a20.sin();
    Lower3 {
        l10: cos_angle(a10) * 1.0,
        l11: 1.0 * a10.sin(),
        l20: cos_angle(a20) * 1.0,
        l21: cos_angle(a21) * s20,
        l22: s20 * a21.sin(),
    }
}

#[inline]
pub fn rho(t: f64) -> f64 {
    cos_angle(angle(t)) * 1.0
}

#[inline]
fn ln_floor(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0).ln()
}

#[inline]
fn sign(y: bool) -> f64 {
    if y {
        1.0
    } else {
        -1.0
    }
}

/// Which likelihood branch a row uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    /// Employed: trivariate rectangle by GHK.
    Selected { y_f: bool, y_c: bool },
    /// Not employed: bivariate over `(y_f, E = 0)`.
    Unselected { y_f: bool },
    /// Bivariate model: `(y_f, y_c)`.
    Pair { y_f: bool, y_c: bool },
}

impl RowKind {
    /// Local parameters the contribution depends on.
    pub fn active(&self) -> &'static [usize] {
        match self {
            RowKind::Selected { .. } => &[0, 1, 2, 3, 4, 5],
            RowKind::Unselected { .. } => &[0, 1, 3],
            RowKind::Pair { .. } => &[0, 2, 3],
        }
    }
}

/// Log contribution of one row.
pub fn loglik(kind: RowKind, p: &Local, draws: Option<&DrawMatrix>) -> f64 {
    match kind {
        RowKind::Selected { y_f, y_c } => {
            let (qf, qc) = (sign(y_f), sign(y_c));
            let l = lower3(p[3], p[4], p[5]).flipped([qf, 1.0, qc]);
            let d = draws.expect("selected rows carry draws");
            ln_floor(ghk3_kernel([qf * p[0], p[1], qc * p[2]], &l, d))
        }
        RowKind::Unselected { y_f } => {
            let qf = sign(y_f);
            ln_floor(bvn(qf * p[0], -p[1], -qf * rho(p[3])))
        }
        RowKind::Pair { y_f, y_c } => {
            let (qf, qc) = (sign(y_f), sign(y_c));
            ln_floor(bvn(qf * p[0], qc * p[2], qf * qc * rho(p[3])))
        }
    }
}

/// Same arithmetic as the simulator's trivariate fast path.
#[inline]
fn ghk3_kernel(a: [f64; 3], l: &Lower3, draws: &DrawMatrix) -> f64 {
    crate::mvn::ghk::ghk3(a, l, draws)
}

/// Log contribution and its central-difference gradient in the local
/// parameters. Inactive entries of the gradient are zero.
pub fn score(kind: RowKind, p: &Local, draws: Option<&DrawMatrix>) -> (f64, Local) {
    match kind {
        RowKind::Selected { y_f, y_c } => {
            selected_score(sign(y_f), sign(y_c), p, draws.expect("selected rows carry draws"))
        }
        _ => {
            let base = loglik(kind, p, None);
            let mut g = [0.0; LOCAL];
            for &k in kind.active() {
                let h = fd_step(p[k]);
                let mut up = *p;
                let mut dn = *p;
                up[k] += h;
                dn[k] -= h;
                g[k] = (loglik(kind, &up, None) - loglik(kind, &dn, None)) / (up[k] - dn[k]);
            }
            (base, g)
        }
    }
}

/// Local Hessian by central differences of [`score`], symmetrized.
pub fn hessian(kind: RowKind, p: &Local, draws: Option<&DrawMatrix>) -> [[f64; LOCAL]; LOCAL] {
    let mut h = [[0.0; LOCAL]; LOCAL];
    let outer = f64::EPSILON.powf(0.25);
    for &m in kind.active() {
        let step = outer * p[m].abs().max(1.0);
        let mut up = *p;
        let mut dn = *p;
        up[m] += step;
        dn[m] -= step;
        let (_, gu) = score(kind, &up, draws);
        let (_, gd) = score(kind, &dn, draws);
        let denom = up[m] - dn[m];
        for &k in kind.active() {
            h[k][m] = (gu[k] - gd[k]) / denom;
        }
    }
    for i in 0..LOCAL {
        for j in 0..i {
            let s = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = s;
            h[j][i] = s;
        }
    }
    h
}

// Variant slots of the shared-prefix evaluation.
const BASE: usize = 0;
const F_UP: usize = 1;
const F_DN: usize = 2;
const E_UP: usize = 3;
const E_DN: usize = 4;
const R1_UP: usize = 5;
const R1_DN: usize = 6;
const C_UP: usize = 7;
const C_DN: usize = 8;
const R20_UP: usize = 9;
const R20_DN: usize = 10;
const R21_UP: usize = 11;
const R21_DN: usize = 12;
const VARIANTS: usize = 13;

/// Thirteen GHK evaluations (base and ± each local parameter) sharing the
/// conditioning stages that a perturbation leaves unchanged.
fn selected_score(qf: f64, qc: f64, p: &Local, draws: &DrawMatrix) -> (f64, Local) {
    let mut up = *p;
    let mut dn = *p;
    for k in 0..LOCAL {
        let h = fd_step(p[k]);
        up[k] += h;
        dn[k] -= h;
    }
    let flip = [qf, 1.0, qc];
    let l0 = lower3(p[3], p[4], p[5]).flipped(flip);
    let r1_up = lower3(up[3], p[4], p[5]).flipped(flip);
    let r1_dn = lower3(dn[3], p[4], p[5]).flipped(flip);
    let r20_up = lower3(p[3], up[4], p[5]).flipped(flip);
    let r20_dn = lower3(p[3], dn[4], p[5]).flipped(flip);
    let r21_up = lower3(p[3], p[4], up[5]).flipped(flip);
    let r21_dn = lower3(p[3], p[4], dn[5]).flipped(flip);

    let a0 = qf * p[0];
    let a1 = p[1];
    let a2 = qc * p[2];
    let p0 = cdf(a0);
    let p0_up = cdf(qf * up[0]);
    let p0_dn = cdf(qf * dn[0]);
    let a1_up = up[1];
    let a1_dn = dn[1];
    let a2_up = qc * up[2];
    let a2_dn = qc * dn[2];

    #[inline(always)]
    fn stage2(a1: f64, l: &Lower3, e0: f64, u1: f64) -> (f64, f64) {
        let p1 = cdf((a1 - l.l10 * e0) / l.l11);
        (p1, quantile((u1 * p1).max(TINY)))
    }
    #[inline(always)]
    fn stage3(a2: f64, l: &Lower3, e0: f64, e1: f64) -> f64 {
        cdf((a2 - l.l20 * e0 - l.l21 * e1) / l.l22)
    }

    let mut s = [0.0; VARIANTS];
    let mut step = |u0: f64, u1: f64| {
        let e0 = quantile((u0 * p0).max(TINY));
        let (p1, e1) = stage2(a1, &l0, e0, u1);
        s[BASE] += p1 * stage3(a2, &l0, e0, e1);

        s[C_UP] += p1 * stage3(a2_up, &l0, e0, e1);
        s[C_DN] += p1 * stage3(a2_dn, &l0, e0, e1);
        s[R20_UP] += p1 * stage3(a2, &r20_up, e0, e1);
        s[R20_DN] += p1 * stage3(a2, &r20_dn, e0, e1);
        s[R21_UP] += p1 * stage3(a2, &r21_up, e0, e1);
        s[R21_DN] += p1 * stage3(a2, &r21_dn, e0, e1);

        let (q, e) = stage2(a1_up, &l0, e0, u1);
        s[E_UP] += q * stage3(a2, &l0, e0, e);
        let (q, e) = stage2(a1_dn, &l0, e0, u1);
        s[E_DN] += q * stage3(a2, &l0, e0, e);
        let (q, e) = stage2(a1, &r1_up, e0, u1);
        s[R1_UP] += q * stage3(a2, &r1_up, e0, e);
        let (q, e) = stage2(a1, &r1_dn, e0, u1);
        s[R1_DN] += q * stage3(a2, &r1_dn, e0, e);

        for (slot, pf) in [(F_UP, p0_up), (F_DN, p0_dn)] {
            let e0 = quantile((u0 * pf).max(TINY));
            let (q, e) = stage2(a1, &l0, e0, u1);
            s[slot] += q * stage3(a2, &l0, e0, e);
        }
    };
    let values = draws.values();
    for uv in values.chunks_exact(2) {
        step(uv[0], uv[1]);
        if draws.antithetic() {
            step(1.0 - uv[0], 1.0 - uv[1]);
        }
    }
    let n = if draws.antithetic() {
        2 * draws.draws()
    } else {
        draws.draws()
    } as f64;
    let ll = |p0: f64, sum: f64| ln_floor(p0 * sum / n);
    let base = ll(p0, s[BASE]);
    let mut g = [0.0; LOCAL];
    g[0] = (ll(p0_up, s[F_UP]) - ll(p0_dn, s[F_DN])) / (up[0] - dn[0]);
    g[1] = (ll(p0, s[E_UP]) - ll(p0, s[E_DN])) / (up[1] - dn[1]);
    g[2] = (ll(p0, s[C_UP]) - ll(p0, s[C_DN])) / (up[2] - dn[2]);
    g[3] = (ll(p0, s[R1_UP]) - ll(p0, s[R1_DN])) / (up[3] - dn[3]);
    g[4] = (ll(p0, s[R20_UP]) - ll(p0, s[R20_DN])) / (up[4] - dn[4]);
    g[5] = (ll(p0, s[R21_UP]) - ll(p0, s[R21_DN])) / (up[5] - dn[5]);
    (base, g)
}
