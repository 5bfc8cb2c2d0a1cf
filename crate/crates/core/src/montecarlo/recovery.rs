use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{simulate_dataset, DgpSpec};
use crate::error::{Error, Result};
use crate::inference::{invert_symmetric, CovarianceKind};
use crate::model::build_design;
use crate::model::params::correlation_labels;
use crate::mvn::draws::mix;
use crate::mvn::GhkConfig;
use crate::sml::{correlation_standard_errors, fit_design, FitOptions, LikelihoodProblem};

const Z95: f64 = 1.959963984540054;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    /// Coefficients followed by the implied correlations.
    pub estimate: Vec<f64>,
    pub standard_errors: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub rmse: f64,
    /// Monte Carlo standard error of the mean estimate.
    /// Needs at least two replications.
    pub mc_se: Option<f64>,
    pub coverage: Option<f64>,
    pub used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub n: usize,
    pub replications_requested: usize,
    pub non_converged: usize,
    pub failed: usize,
    /// Interval covariance; `None` skips standard errors.
    pub covariance: Option<CovarianceKind>,
    pub config: GhkConfig,
    pub names: Vec<String>,
    pub truth: Vec<f64>,
    pub replications: Vec<Replication>,
    pub parameters: Vec<ParameterSummary>,
}

impl RecoveryReport {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,truth,mean,bias,rmse,mc_se,coverage,used\n");
        for p in &self.parameters {
            out.push_str(&format!(
                "\"{}\",{},{},{},{},{},{},{}\n",
                p.name,
                p.truth,
                p.mean,
                p.bias,
                p.rmse,
                p.mc_se.map(|c| c.to_string()).unwrap_or_default(),
                p.coverage.map(|c| c.to_string()).unwrap_or_default(),
                p.used
            ));
        }
        out
    }

    /// One line per replication: index, seed, convergence, estimates.
    pub fn replications_csv(&self) -> String {
        let mut out = String::from("replication,seed,converged,iterations");
        for n in &self.names {
            out.push_str(&format!(",\"{n}\""));
        }
        out.push('\n');
        for r in &self.replications {
            out.push_str(&format!("{},{},{},{}", r.index, r.seed, r.converged, r.iterations));
            for j in 0..self.names.len() {
                out.push(',');
                if let Some(v) = r.estimate.get(j) {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

/// One replication with the parameter names and true values.
type RunOutput = (Replication, Vec<String>, Vec<f64>);

fn run_one(
    dgp: &DgpSpec,
    index: usize,
    config: &GhkConfig,
    options: &FitOptions,
    covariance: Option<CovarianceKind>,
) -> Result<RunOutput> {
    let seed = mix(dgp.seed, index as u64);
    let rep_dgp = dgp.clone().with_seed(seed);
    let data = simulate_dataset(&rep_dgp)?;
    let mut cfg = config.clone();
    cfg.seed = mix(config.seed, index as u64);
    let design = build_design(&data, &dgp.model)?;
    // OPG needs only the score matrix at the estimate; skip the Hessian.
    let mut opts = options.clone();
    if covariance.is_none() || covariance == Some(CovarianceKind::Opg) {
        opts.covariance = false;
        opts.final_draws = None;
    }
    let result = fit_design(&design, &dgp.model, &cfg, &opts)?;
    let layout = &result.layout;
    let n_coef = layout.n_coefficients();
    let labels = layout.labels();
    let mut names: Vec<String> = labels[..n_coef].to_vec();
    names.extend(correlation_labels(layout.dim));
    let mut truth = dgp.true_parameters(layout)?.0[..n_coef].to_vec();
    truth.extend_from_slice(&dgp.correlations);
    let mut estimate = result.estimate.0[..n_coef].to_vec();
    estimate.extend(result.correlations().into_iter().map(|(_, r)| r));
    let standard_errors = match covariance {
        None => None,
        Some(CovarianceKind::Opg) => {
            let (_, _, scores) = LikelihoodProblem::new(&design, &cfg)?.score_matrix(result.estimate.as_slice())?;
            invert_symmetric(&(scores.transpose() * &scores), "outer product of scores")
                .ok()
                .and_then(|v| {
                    let mut se: Vec<f64> = (0..n_coef).map(|i| v[(i, i)].max(0.0).sqrt()).collect();
                    se.extend(correlation_standard_errors(layout, result.estimate.as_slice(), &v)?);
                    Some(se)
                })
        }
        Some(kind) => result.standard_errors(kind).and_then(|se| {
            let mut v = se[..n_coef].to_vec();
            v.extend(result.correlation_standard_errors(kind)?);
            Some(v)
        }),
    };
    Ok((
        Replication {
            index,
            seed,
            converged: result.converged,
            iterations: result.iterations,
            estimate,
            standard_errors,
            error: None,
        },
        names,
        truth,
    ))
}

/// Simulates and fits `replications` datasets and summarizes bias, RMSE and
/// 95% interval coverage. Replication `i` uses a seed derived from the base
/// seed and `i`; failed or non-converged replications are counted and left
/// out of the summaries.
pub fn recovery_experiment(
    dgp: &DgpSpec,
    replications: usize,
    config: &GhkConfig,
    options: &FitOptions,
    covariance: Option<CovarianceKind>,
) -> Result<RecoveryReport> {
    if replications == 0 {
        return Err(Error::Domain("recovery needs at least one replication".into()));
    }
    dgp.validate()?;
    let runs: Vec<Result<RunOutput>> = (0..replications)
        .into_par_iter()
        .map(|i| run_one(dgp, i, config, options, covariance))
        .collect();
    let mut names = Vec::new();
    let mut truth = Vec::new();
    let mut reps = Vec::with_capacity(replications);
    let mut failed = 0;
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok((rep, n, t)) => {
                if names.is_empty() {
                    names = n;
                    truth = t;
                }
                reps.push(rep);
            }
            Err(e) => {
                failed += 1;
                log::warn!("replication {i} failed: {e}");
                reps.push(Replication {
                    index: i,
                    seed: mix(dgp.seed, i as u64),
                    converged: false,
                    iterations: 0,
                    estimate: Vec::new(),
                    standard_errors: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let non_converged = reps.iter().filter(|r| r.error.is_none() && !r.converged).count();
    let used: Vec<&Replication> = reps.iter().filter(|r| r.converged).collect();
    if used.is_empty() {
        let first = reps.iter().find_map(|r| r.error.clone()).unwrap_or_else(|| "no convergence".into());
        return Err(Error::Numerical(format!("no replication converged ({first})")));
    }
    let parameters = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let vals: Vec<f64> = used.iter().map(|r| r.estimate[j]).collect();
            let m = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / m;
            let rmse = (vals.iter().map(|v| (v - truth[j]).powi(2)).sum::<f64>() / m).sqrt();
            let mc_se = (vals.len() > 1).then(|| {
                let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
                sd / m.sqrt()
            });
            let with_se: Vec<(f64, f64)> = used
                .iter()
                .filter_map(|r| r.standard_errors.as_ref().map(|s| (r.estimate[j], s[j])))
                .collect();
            let coverage = (!with_se.is_empty()).then(|| {
                with_se
                    .iter()
                    .filter(|(e, s)| (e - truth[j]).abs() <= Z95 * s)
                    .count() as f64
                    / with_se.len() as f64
            });
            ParameterSummary {
                name: name.clone(),
                truth: truth[j],
                mean,
                bias: mean - truth[j],
                rmse,
                mc_se,
                coverage,
                used: vals.len(),
            }
        })
        .collect();
    Ok(RecoveryReport {
        n: dgp.n,
        replications_requested: replications,
        non_converged,
        failed,
        covariance,
        config: config.clone(),
        names,
        truth,
        replications: reps,
        parameters,
    })
}
