use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::bfgs::{self, BfgsOptions, IterationRecord, Objective};
use super::likelihood::LikelihoodProblem;
use super::probit::fit_probit;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::{compute_covariances, delta_method, CovarianceKind, CovarianceSet};
use crate::model::params::correlation_labels;
use crate::model::spec::{EquationKind, ModelMode, ModelSpec};
use crate::model::{build_design, DesignMatrices, ParamBlocks, ParamLayout, ParameterVector};
use crate::mvn::{CorrelationParams, GhkConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol_grad: f64,
    pub tol_ll: f64,
    pub covariance: bool,
    /// Draws for the reported log-likelihood and covariance; `None` reuses
    /// the estimation draws.
    pub final_draws: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol_grad: 1e-5,
            tol_ll: 1e-9,
            covariance: true,
            final_draws: Some(2000),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub spec: ModelSpec,
    pub spec_hash: String,
    pub layout: ParamLayout,
    pub estimate: ParameterVector,
    pub start: ParameterVector,
    /// Maximized simulated log-likelihood under the estimation draws.
    pub log_likelihood: f64,
    /// Log-likelihood at the estimate under the final draws.
    pub final_log_likelihood: Option<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
    pub n_obs: usize,
    pub n_selected: usize,
    pub config: GhkConfig,
    pub final_config: Option<GhkConfig>,
    pub options: FitOptions,
    pub covariance: Option<CovarianceSet>,
    pub trace: Vec<IterationRecord>,
    pub warnings: Vec<String>,
}

impl EstimationResult {
    pub fn blocks(&self) -> ParamBlocks {
        ParamBlocks::unpack(&self.estimate, &self.layout).expect("estimate matches its layout")
    }

    pub fn correlation_params(&self) -> CorrelationParams {
        self.blocks().correlation().expect("free parameters are bounded")
    }

    /// Implied error correlations, labelled.
    pub fn correlations(&self) -> Vec<(String, f64)> {
        correlation_labels(self.layout.dim)
            .into_iter()
            .zip(self.correlation_params().correlations())
            .collect()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.correlation_params().angles().to_vec()
    }

    pub fn coefficient(&self, kind: EquationKind, name: &str) -> Option<f64> {
        self.layout.index_of(kind, name).map(|i| self.estimate.0[i])
    }

    pub fn covariance_matrix(&self, kind: CovarianceKind) -> Option<&DMatrix<f64>> {
        self.covariance.as_ref().and_then(|c| c.get(kind))
    }

    pub fn standard_errors(&self, kind: CovarianceKind) -> Option<Vec<f64>> {
        self.covariance.as_ref().and_then(|c| c.standard_errors(kind))
    }

    /// Delta-method standard errors of the implied correlations.
    pub fn correlation_standard_errors(&self, kind: CovarianceKind) -> Option<Vec<f64>> {
        correlation_standard_errors(&self.layout, self.estimate.as_slice(), self.covariance_matrix(kind)?)
    }
}

/// Delta-method standard errors of the implied correlations under the
/// covariance `v` of the free parameters.
pub fn correlation_standard_errors(layout: &ParamLayout, estimate: &[f64], v: &DMatrix<f64>) -> Option<Vec<f64>> {
    (0..layout.n_correlations())
        .map(|j| {
            let g = |theta: &[f64]| -> Result<f64> {
                let b = ParamBlocks::unpack(&ParameterVector(theta.to_vec()), layout)?;
                Ok(b.correlation()?.correlations()[j])
            };
            delta_method(g, estimate, v).ok().map(|(_, se)| se)
        })
        .collect()
}

impl Objective for LikelihoodProblem<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        LikelihoodProblem::value(self, x)
    }

    fn gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        LikelihoodProblem::gradient(self, x)
    }
}

/// Separate single-equation probits; angles start at π/2.
pub fn starting_values(dataset: &Dataset, spec: &ModelSpec) -> Result<ParameterVector> {
    let design = build_design(dataset, spec)?;
    Ok(design_starting_values(&design, &mut Vec::new()))
}

fn design_starting_values(design: &DesignMatrices, warnings: &mut Vec<String>) -> ParameterVector {
    let layout = ParamLayout::from_design(design);
    let selected: Vec<bool> = (0..design.n_obs()).map(|i| design.selected(i)).collect();
    let mut coefficients = Vec::new();
    for eq in design.equations() {
        let (y, mask) = match eq.layout.kind {
            EquationKind::FirstJob => (&design.y_f, None),
            EquationKind::Employment => (&design.employed, None),
            EquationKind::CurrentJob => (&design.y_c, Some(selected.as_slice())),
        };
        let width = eq.layout.width();
        match fit_probit(&eq.matrix, y, mask) {
            Ok(f) if f.converged => coefficients.push(f.coefficients),
            Ok(_) | Err(_) => {
                let msg = format!("{}: starting probit did not converge; starting from zero", eq.layout.kind);
                log::warn!("{msg}");
                warnings.push(msg);
                coefficients.push(vec![0.0; width]);
            }
        }
    }
    let blocks = ParamBlocks {
        coefficients,
        correlation_free: vec![0.0; layout.n_correlations()],
    };
    blocks.pack(&layout).expect("blocks built from layout")
}

/// Fits the model described by `spec`.
pub fn fit(dataset: &Dataset, spec: &ModelSpec, config: &GhkConfig, options: &FitOptions) -> Result<EstimationResult> {
    let design = build_design(dataset, spec)?;
    fit_design(&design, spec, config, options)
}

/// Two-equation model without the employment equation; the likelihood is
/// exact.
pub fn fit_bivariate(
    dataset: &Dataset,
    spec: &ModelSpec,
    config: &GhkConfig,
    options: &FitOptions,
) -> Result<EstimationResult> {
    let spec = match spec.mode {
        ModelMode::Bivariate => spec.clone(),
        ModelMode::Trivariate => spec.to_bivariate(),
    };
    fit(dataset, &spec, config, options)
}

/// Fits on a prebuilt design.
pub fn fit_design(
    design: &DesignMatrices,
    spec: &ModelSpec,
    config: &GhkConfig,
    options: &FitOptions,
) -> Result<EstimationResult> {
    let mut warnings = design.warnings.clone();
    let start = design_starting_values(design, &mut warnings);
    let problem = LikelihoodProblem::new(design, config)?;
    let (ll0, g0, s0) = problem.score_matrix(start.as_slice())?;
    if !ll0.is_finite() {
        return Err(Error::NonFinite(format!("log-likelihood at the starting values is {ll0}")));
    }
    let h0 = crate::inference::invert_symmetric(&(s0.transpose() * &s0), "initial outer product").ok();
    let bfgs_options = BfgsOptions {
        max_iter: options.max_iter,
        tol_grad: options.tol_grad,
        tol_ll: options.tol_ll,
        ..Default::default()
    };
    let out = bfgs::maximize(&problem, start.as_slice(), Some((ll0, g0)), h0, &bfgs_options)?;
    if !out.converged {
        let msg = format!("optimizer stopped without convergence: {}", out.message);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let gradient_norm = out.gradient.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let trivariate = design.dim() == 3;
    let final_config = match options.final_draws {
        Some(r) if trivariate && r != config.draws => Some(config.with_draws(r)),
        _ => None,
    };
    let mut final_log_likelihood = None;
    let mut covariance = None;
    if options.covariance {
        let computed = match &final_config {
            Some(fc) => covariances(&LikelihoodProblem::new(design, fc)?, &out.x, design),
            None => covariances(&problem, &out.x, design),
        };
        match computed {
            Ok((ll, cov)) => {
                if final_config.is_some() {
                    final_log_likelihood = Some(ll);
                }
                covariance = Some(cov);
            }
            Err(e) => {
                let msg = format!("covariance not available: {e}");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    } else if let Some(fc) = &final_config {
        final_log_likelihood = Some(LikelihoodProblem::new(design, fc)?.value(&out.x)?);
    }

    Ok(EstimationResult {
        spec: spec.clone(),
        spec_hash: spec.hash(),
        layout: problem.layout().clone(),
        estimate: ParameterVector(out.x),
        start,
        log_likelihood: out.value,
        final_log_likelihood,
        gradient_norm,
        iterations: out.iterations,
        converged: out.converged,
        message: out.message,
        n_obs: design.n_obs(),
        n_selected: (0..design.n_obs()).filter(|&i| design.selected(i)).count(),
        config: config.clone(),
        final_config,
        options: options.clone(),
        covariance,
        trace: out.trace,
        warnings,
    })
}

fn covariances(problem: &LikelihoodProblem<'_>, x: &[f64], design: &DesignMatrices) -> Result<(f64, CovarianceSet)> {
    let (ll, _, scores) = problem.score_matrix(x)?;
    let hessian = problem.hessian(x)?;
    let cov = compute_covariances(&scores, &hessian, design.clusters.as_deref())?;
    Ok((ll, cov))
}
