use serde::{Deserialize, Serialize};

use super::dgp::{simulate_dataset, DgpSpec};
use crate::error::{Error, Result};
use crate::inference::CovarianceKind;
use crate::model::build_design;
use crate::model::spec::EquationKind;
use crate::mvn::GhkConfig;
use crate::sml::{fit_design, fit_probit, EstimationResult, FitOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MisspecMode {
    /// Two-equation model without the employment equation.
    IgnoreSelection,
    /// Single-equation probit of the current-job outcome on employed rows.
    IgnoreEndogeneity,
}

impl std::str::FromStr for MisspecMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ignore-selection" => Ok(Self::IgnoreSelection),
            "ignore-endogeneity" => Ok(Self::IgnoreEndogeneity),
            other => Err(Error::Domain(format!("unknown misspecification mode `{other}`"))),
        }
    }
}

/// Current-job coefficient under the full and the reduced model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisspecRow {
    pub parameter: String,
    pub truth: f64,
    pub full_estimate: Option<f64>,
    pub full_se: Option<f64>,
    pub reduced_estimate: f64,
    pub reduced_se: f64,
}

impl MisspecRow {
    /// Reduced minus full, in units of the full-model standard error.
    pub fn gap_in_full_se(&self) -> Option<f64> {
        Some((self.reduced_estimate - self.full_estimate?) / self.full_se?)
    }

    /// Reduced-model bias relative to the truth, in its own standard errors.
    pub fn reduced_bias_in_se(&self) -> f64 {
        (self.reduced_estimate - self.truth) / self.reduced_se
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisspecReport {
    pub mode: MisspecMode,
    pub n: usize,
    pub full_converged: Option<bool>,
    pub reduced_converged: bool,
    pub rows: Vec<MisspecRow>,
}

impl MisspecReport {
    pub fn row(&self, parameter: &str) -> Option<&MisspecRow> {
        self.rows.iter().find(|r| r.parameter == parameter)
    }
}

fn coefficient_se(r: &EstimationResult, name: &str, cov: CovarianceKind) -> Result<(f64, f64)> {
    let idx = r
        .layout
        .index_of(EquationKind::CurrentJob, name)
        .ok_or_else(|| Error::Spec(format!("`{name}` not in current_job")))?;
    let se = r
        .standard_errors(cov)
        .ok_or_else(|| Error::Numerical("covariance unavailable".into()))?[idx];
    Ok((r.estimate.0[idx], se))
}

/// Fits the full model (when `fit_full`) and a reduced model to one
/// simulated dataset and compares the current-job coefficients.
pub fn misspecification_study(
    dgp: &DgpSpec,
    mode: MisspecMode,
    config: &GhkConfig,
    options: &FitOptions,
    fit_full: bool,
) -> Result<MisspecReport> {
    let data = simulate_dataset(dgp)?;
    let spec = &dgp.model;
    let cov = CovarianceKind::Hessian;
    let full = if fit_full {
        let design = build_design(&data, spec)?;
        Some(fit_design(&design, spec, config, options)?)
    } else {
        None
    };
    let reduced_spec = spec.to_bivariate();
    let truth_layout_design = build_design(&data, &reduced_spec)?;
    let names = truth_layout_design.current_job.layout.names();
    let truth_map = dgp.coefficients.get("current_job").cloned().unwrap_or_default();

    let (reduced, reduced_converged): (Vec<(f64, f64)>, bool) = match mode {
        MisspecMode::IgnoreSelection => {
            let r = fit_design(&truth_layout_design, &reduced_spec, config, options)?;
            let vals = names
                .iter()
                .map(|n| coefficient_se(&r, n, cov))
                .collect::<Result<Vec<_>>>()?;
            (vals, r.converged)
        }
        MisspecMode::IgnoreEndogeneity => {
            let d = &truth_layout_design;
            let p = fit_probit(&d.current_job.matrix, &d.y_c, None)?;
            if p.covariance.nrows() == 0 {
                return Err(Error::Numerical("naive probit did not converge".into()));
            }
            let se = p.standard_errors();
            (p.coefficients.iter().copied().zip(se).collect(), p.converged)
        }
    };
    let rows = names
        .iter()
        .zip(reduced)
        .map(|(name, (est, se))| {
            let (fe, fs) = match &full {
                Some(f) => match coefficient_se(f, name, cov) {
                    Ok((e, s)) => (Some(e), Some(s)),
                    Err(_) => (None, None),
                },
                None => (None, None),
            };
            Ok(MisspecRow {
                parameter: name.clone(),
                truth: truth_map.get(name).copied().unwrap_or(0.0),
                full_estimate: fe,
                full_se: fs,
                reduced_estimate: est,
                reduced_se: se,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MisspecReport {
        mode,
        n: dgp.n,
        full_converged: full.as_ref().map(|f| f.converged),
        reduced_converged,
        rows,
    })
}
