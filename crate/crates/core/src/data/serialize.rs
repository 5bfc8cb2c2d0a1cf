//! JSON result documents.

use serde::{Deserialize, Serialize};

use crate::effects::ApeResult;
use crate::error::Result;
use crate::inference::CovarianceKind;
use crate::mvn::GhkConfig;
use crate::sml::EstimationResult;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
}

/// One error correlation in both representations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub label: String,
    pub free: f64,
    pub angle: f64,
    pub rho: f64,
    pub se: Option<f64>,
}

/// Self-describing estimation output: headline diagnostics and tables
/// first, the full result last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub format_version: u32,
    pub spec_hash: String,
    pub seed: u64,
    pub draws: GhkConfig,
    pub final_draws: Option<GhkConfig>,
    pub converged: bool,
    pub message: String,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub log_likelihood: f64,
    pub final_log_likelihood: Option<f64>,
    pub n_obs: usize,
    pub n_selected: usize,
    pub covariance_kind: Option<CovarianceKind>,
    pub coefficients: Vec<CoefficientEntry>,
    pub correlations: Vec<CorrelationEntry>,
    pub effects: Vec<ApeResult>,
    pub warnings: Vec<String>,
    pub result: EstimationResult,
}

impl ResultDocument {
    pub fn new(result: &EstimationResult, effects: &[ApeResult]) -> Self {
        let kind = result.covariance.as_ref().map(|c| c.preferred().0);
        let se = kind.and_then(|k| result.standard_errors(k));
        let rho_se = kind.and_then(|k| result.correlation_standard_errors(k));
        let n_coef = result.layout.n_coefficients();
        let labels = result.layout.labels();
        let coefficients = (0..n_coef)
            .map(|i| CoefficientEntry {
                name: labels[i].clone(),
                estimate: result.estimate.0[i],
                se: se.as_ref().map(|s| s[i]),
            })
            .collect();
        let correlations = result
            .correlations()
            .into_iter()
            .zip(result.angles())
            .enumerate()
            .map(|(j, ((label, rho), angle))| CorrelationEntry {
                label,
                free: result.estimate.0[n_coef + j],
                angle,
                rho,
                se: rho_se.as_ref().map(|s| s[j]),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            spec_hash: result.spec_hash.clone(),
            seed: result.config.seed,
            draws: result.config.clone(),
            final_draws: result.final_config.clone(),
            converged: result.converged,
            message: result.message.clone(),
            iterations: result.iterations,
            gradient_norm: result.gradient_norm,
            log_likelihood: result.log_likelihood,
            final_log_likelihood: result.final_log_likelihood,
            n_obs: result.n_obs,
            n_selected: result.n_selected,
            covariance_kind: kind,
            coefficients,
            correlations,
            effects: effects.to_vec(),
            warnings: result.warnings.clone(),
            result: result.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Pretty JSON document for a result and its effects.
pub fn serialize_result(result: &EstimationResult, effects: &[ApeResult]) -> Result<String> {
    ResultDocument::new(result, effects).to_json()
}
