use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub tol_grad: f64,
    pub tol_ll: f64,
    /// Largest ∞-norm of a trial step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol_grad: 1e-5,
            tol_ll: 1e-9,
            max_step: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub gradient_norm: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
    pub trace: Vec<IterationRecord>,
}

/// Function to maximize, with gradient.
pub trait Objective {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// BFGS maximization with Armijo backtracking. `h0` is the initial inverse
/// of the negative Hessian.
///
/// Accepted steps never lower the objective by more than its rounding
/// resolution. Near the optimum the predicted gain of a full step falls
/// below that resolution, Armijo can no longer tell ascent from noise, and
/// the full step is taken as long as the objective does not visibly drop.
pub fn maximize<O: Objective>(
    objective: &O,
    x0: &[f64],
    start: Option<(f64, Vec<f64>)>,
    h0: Option<DMatrix<f64>>,
    options: &BfgsOptions,
) -> Result<BfgsOutcome> {
    let p = x0.len();
    let (mut f, g0) = match start {
        Some(s) => s,
        None => objective.gradient(x0)?,
    };
    if !f.is_finite() {
        return Err(Error::NonFinite(format!("log-likelihood at the starting values is {f}")));
    }
    let mut x = DVector::from_column_slice(x0);
    let mut g = DVector::from_vec(g0);
    let identity_scale = |g: &DVector<f64>| {
        let n = g.norm();
        DMatrix::identity(p, p) * if n > 0.0 { 1.0 / n } else { 1.0 }
    };
    let mut h = match h0 {
        Some(m) if m.nrows() == p && m.iter().all(|v| v.is_finite()) => m,
        _ => identity_scale(&g),
    };
    let mut trace = vec![IterationRecord {
        iteration: 0,
        log_likelihood: f,
        gradient_norm: inf_norm(g.as_slice()),
        step: 0.0,
    }];
    let mut converged = false;
    let mut message = String::from("iteration limit reached");
    let mut iterations = 0;
    let mut reset = false;
    let mut flat_steps = 0;
    while iterations < options.max_iter {
        let mut d = &h * &g;
        let mut slope = g.dot(&d);
        if !slope.is_finite() || slope <= 0.0 {
            h = identity_scale(&g);
            d = &h * &g;
            slope = g.dot(&d);
        }
        let dmax = d.amax();
        if dmax > options.max_step {
            d *= options.max_step / dmax;
            slope = g.dot(&d);
        }
        // Rounding resolution of a sum of many log contributions.
        let noise = 64.0 * f64::EPSILON * f.abs().max(1.0);
        let flat = slope <= noise;
        let mut alpha = 1.0;
        let mut accepted = None;
        // Backtracking cannot resolve a flat objective; one full step only.
        for _ in 0..if flat { 1 } else { 60 } {
            let trial = &x + &d * alpha;
            match objective.value(trial.as_slice()) {
                Ok(v) if v.is_finite() && (v >= f + 1e-4 * alpha * slope || (flat && v >= f - noise)) => {
                    accepted = Some((trial, v));
                    break;
                }
                Ok(_) | Err(Error::NonFinite(_)) => alpha *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some((x_new, _)) = accepted else {
            if inf_norm(g.as_slice()) < options.tol_grad {
                converged = true;
                message = "converged: no further ascent possible".into();
                break;
            }
            if !reset {
                reset = true;
                h = identity_scale(&g);
                continue;
            }
            message = "line search failed".into();
            break;
        };
        reset = false;
        iterations += 1;
        let (f_new, g_new) = objective.gradient(x_new.as_slice())?;
        let g_new = DVector::from_vec(g_new);
        let s = &x_new - &x;
        let y = &g - &g_new;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // Inverse BFGS update in rank-two form.
            h += (&s * s.transpose()) * (rho * (1.0 + rho * yhy)) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let change = (f_new - f).abs();
        x = x_new;
        f = f_new;
        g = g_new;
        let gnorm = inf_norm(g.as_slice());
        trace.push(IterationRecord {
            iteration: iterations,
            log_likelihood: f,
            gradient_norm: gnorm,
            step: alpha * d.amax(),
        });
        log::debug!("iteration {iterations}: loglik {f:.10} |g| {gnorm:.3e}");
        if gnorm < options.tol_grad && change < options.tol_ll {
            converged = true;
            message = "converged".into();
            break;
        }
        flat_steps = if change <= noise { flat_steps + 1 } else { 0 };
        if flat_steps >= 5 {
            message = format!("stalled: objective flat within rounding, gradient norm {gnorm:.2e}");
            break;
        }
    }
    Ok(BfgsOutcome {
        x: x.as_slice().to_vec(),
        value: f,
        gradient: g.as_slice().to_vec(),
        iterations,
        converged,
        message,
        trace,
    })
}
