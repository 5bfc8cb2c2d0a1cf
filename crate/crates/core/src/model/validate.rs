use serde::{Deserialize, Serialize};

use super::spec::{EquationKind, ModelSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Outcome of auditing a model specification against a dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpecReport {
    /// Covariates of each equation that are excluded from current_job.
    pub exclusion_restrictions: Vec<(EquationKind, Vec<String>)>,
    pub warnings: Vec<String>,
}

impl SpecReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (kind, cols) in &self.exclusion_restrictions {
            if cols.is_empty() {
                out.push_str(&format!("{kind}: no exclusion restrictions\n"));
            } else {
                out.push_str(&format!("{kind}: excluded from current_job: {}\n", cols.join(", ")));
            }
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

/// Checks structure and column references and lists exclusion restrictions.
pub fn validate_spec(spec: &ModelSpec, dataset: &Dataset) -> Result<SpecReport> {
    spec.check_structure()?;
    let mut report = SpecReport::default();
    for (kind, eq) in spec.equations() {
        for col in eq.base_columns() {
            dataset.column(col)?;
        }
        if let Some(outcome) = spec.outcome(kind) {
            dataset.column(outcome)?;
        }
    }
    if let Some(c) = &spec.cluster {
        dataset.column(c)?;
    }
    for (name, reference) in &spec.references {
        let col = dataset.column(name)?;
        if col.kind.level_index(reference).is_none() {
            return Err(Error::Spec(format!("reference `{reference}` is not a level of `{name}`")));
        }
    }

    let current: Vec<&str> = spec.current_job.base_columns();
    for (kind, eq) in spec.equations() {
        if kind == EquationKind::CurrentJob {
            continue;
        }
        let excluded: Vec<String> = eq
            .base_columns()
            .into_iter()
            .filter(|c| !current.contains(c))
            .map(str::to_string)
            .collect();
        if excluded.is_empty() {
            report.warnings.push(format!(
                "{kind} has no covariate excluded from current_job; identification rests on functional form"
            ));
        }
        report.exclusion_restrictions.push((kind, excluded));
    }
    let mut fj: Vec<&str> = spec.first_job.base_columns();
    let mut cj = current.clone();
    fj.sort_unstable();
    cj.sort_unstable();
    if fj == cj {
        report
            .warnings
            .push("first_job and current_job share identical covariate sets".into());
    }
    Ok(report)
}
