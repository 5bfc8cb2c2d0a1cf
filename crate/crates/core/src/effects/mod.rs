//! Average partial effects of discrete changes on the probability of
//! current-job overeducation, with delta-method standard errors.
//!
//! All effects use the structural current-job index `Φ(x'β_c)`, marginal
//! over the error, evaluated at counterfactual design rows built from the
//! data with the target column overridden. Every interaction column that
//! contains the target is rebuilt from its parents, so counterfactual rows
//! stay internally consistent.

mod request;
mod table;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use request::{ApeMode, ApeRequest, CellValue, EffectsFile, GridRequest};
pub use table::{format_cell, format_estimate, render_csv, render_grid, render_table};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::inference::{delta_method, stars, two_sided_p, CovarianceKind};
use crate::model::spec::EquationKind;
use crate::model::{build_design, EquationLayout, Overrides};
use crate::mvn::normal::cdf;
use crate::sml::EstimationResult;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApeResult {
    pub label: String,
    pub value: f64,
    pub se: f64,
    /// Undefined when the standard error is zero.
    pub z: Option<f64>,
    pub p: Option<f64>,
    pub stars: String,
    /// Rows averaged over.
    pub n: usize,
    pub covariance: CovarianceKind,
}

impl ApeResult {
    pub fn new(label: impl Into<String>, value: f64, se: f64, n: usize, covariance: CovarianceKind) -> Self {
        let z = (se > 0.0).then(|| value / se);
        let p = z.map(two_sided_p);
        Self {
            label: label.into(),
            value,
            se,
            z,
            p,
            stars: p.map_or_else(String::new, |p| stars(p).to_string()),
            n,
            covariance,
        }
    }
}

/// Paired counterfactual design rows of the current-job equation.
#[derive(Clone, Debug, PartialEq)]
pub struct Counterfactual {
    pub treated: DMatrix<f64>,
    pub control: DMatrix<f64>,
}

impl Counterfactual {
    pub fn n_rows(&self) -> usize {
        self.treated.nrows()
    }

    /// Per-row probability differences `Φ(x₁'β) − Φ(x₀'β)`.
    pub fn differences(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n_rows())
            .map(|i| {
                let (mut a, mut b) = (0.0, 0.0);
                for (j, &bj) in beta.iter().enumerate() {
                    a += self.treated[(i, j)] * bj;
                    b += self.control[(i, j)] * bj;
                }
                cdf(a) - cdf(b)
            })
            .collect()
    }

    pub fn ape(&self, beta: &[f64]) -> f64 {
        let d = self.differences(beta);
        d.iter().sum::<f64>() / d.len() as f64
    }

    /// APE and delta-method SE; `block` locates `β` inside `params`.
    pub fn ape_with_se(
        &self,
        params: &[f64],
        block: std::ops::Range<usize>,
        covariance: &DMatrix<f64>,
    ) -> Result<(f64, f64)> {
        if self.n_rows() == 0 {
            return Err(Error::Effect("empty subsample".into()));
        }
        if block.len() != self.treated.ncols() {
            return Err(Error::dimension("APE coefficient block", self.treated.ncols(), block.len()));
        }
        // Only β enters the effect; differentiate within its block.
        let sub = covariance.view((block.start, block.start), (block.len(), block.len())).into_owned();
        delta_method(|b| Ok(self.ape(b)), &params[block.clone()], &sub)
    }
}

/// Covariance used for effect standard errors: clustered when available.
fn effect_covariance(result: &EstimationResult) -> Result<(CovarianceKind, &DMatrix<f64>)> {
    result
        .covariance
        .as_ref()
        .map(|c| c.preferred())
        .ok_or_else(|| Error::Effect("the estimation result carries no covariance matrix".into()))
}

/// Current-job layout and the dataset rows of the estimation sample.
fn estimation_rows(result: &EstimationResult, dataset: &Dataset) -> Result<(EquationLayout, Vec<usize>)> {
    let design = build_design(dataset, &result.spec)?;
    let fitted = result.layout.equations.iter().find(|(k, _)| *k == EquationKind::CurrentJob);
    if fitted.map(|(_, names)| names) != Some(&design.current_job.layout.names()) {
        return Err(Error::Effect("dataset does not reproduce the fitted current-job design".into()));
    }
    Ok((design.current_job.layout.clone(), design.rows))
}

/// Resolves a request value against the column's encoding.
fn resolve(dataset: &Dataset, column: &str, value: &CellValue) -> Result<f64> {
    let col = dataset.column(column)?;
    match (value, &col.kind) {
        (CellValue::Number(v), ColumnKind::Categorical { .. }) => Err(Error::Effect(format!(
            "column `{column}` is categorical; give a level code or label, not {v}"
        ))),
        (CellValue::Number(v), _) => Ok(*v),
        (CellValue::Text(s), kind @ ColumnKind::Categorical { .. }) => kind
            .level_index(s)
            .map(|i| i as f64)
            .ok_or_else(|| Error::Effect(format!("`{s}` is not a level of `{column}`"))),
        (CellValue::Text(s), _) => s
            .parse()
            .map_err(|_| Error::Effect(format!("`{s}` is not a number for column `{column}`"))),
    }
}

fn matches(dataset: &Dataset, row: usize, conditions: &[(String, f64)]) -> Result<bool> {
    for (c, v) in conditions {
        if dataset.value(c, row)? != *v {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Treated and control values of the target column.
fn target_values(result: &EstimationResult, dataset: &Dataset, req: &ApeRequest) -> Result<(f64, f64)> {
    let col = dataset.column(&req.target)?;
    match (&col.kind, &req.level) {
        (ColumnKind::Categorical { .. }, Some(level)) => {
            let to = resolve(dataset, &req.target, &CellValue::Text(level.clone()))?;
            let reference = result
                .spec
                .references
                .get(&req.target)
                .ok_or_else(|| Error::Effect(format!("no reference level for `{}`", req.target)))?;
            let from = resolve(dataset, &req.target, &CellValue::Text(reference.clone()))?;
            if to == from {
                return Err(Error::Effect(format!(
                    "`{level}` is the reference level of `{}`; its effect is zero by construction",
                    req.target
                )));
            }
            Ok((to, from))
        }
        (ColumnKind::Categorical { .. }, None) => Err(Error::Effect(format!(
            "categorical target `{}` needs a level",
            req.target
        ))),
        (_, Some(_)) => Err(Error::Effect(format!("`{}` is not categorical; drop the level", req.target))),
        (ColumnKind::Binary, None) => Ok((1.0, 0.0)),
        (_, None) => Ok((req.to, req.from)),
    }
}

/// Checks that the target (and every declared interaction) enters the
/// current-job equation.
fn check_target(layout: &EquationLayout, dataset: &Dataset, req: &ApeRequest) -> Result<()> {
    let level_label = match &req.level {
        Some(l) => {
            let col = dataset.column(&req.target)?;
            let idx = col.kind.level_index(l).expect("level resolved before");
            Some(col.levels().expect("categorical")[idx].label.clone())
        }
        None => None,
    };
    let involves = |c: &crate::model::DesignColumn| {
        c.factors.iter().any(|f| match (f, &level_label) {
            (crate::model::Factor::Level { column, label, .. }, Some(l)) => column == &req.target && label == l,
            (crate::model::Factor::Value { column }, None) => column == &req.target,
            _ => false,
        })
    };
    if !layout.columns.iter().any(&involves) {
        let what = match &req.level {
            Some(l) => format!("{}[{l}]", req.target),
            None => req.target.clone(),
        };
        return Err(Error::Effect(format!("target `{what}` does not enter the current-job equation")));
    }
    for name in &req.interactions {
        let col = layout
            .columns
            .iter()
            .find(|c| &c.name == name)
            .ok_or_else(|| Error::Effect(format!("interaction `{name}` is not a current-job column")))?;
        if col.factors.len() < 2 || !involves(col) {
            return Err(Error::Effect(format!("`{name}` is not an interaction involving `{}`", req.target)));
        }
    }
    Ok(())
}

/// Builds the counterfactual rows for a request.
pub fn counterfactual(result: &EstimationResult, dataset: &Dataset, req: &ApeRequest) -> Result<Counterfactual> {
    let (layout, rows) = estimation_rows(result, dataset)?;
    let (to, from) = target_values(result, dataset, req)?;
    check_target(&layout, dataset, req)?;
    let mut base = Overrides::new();
    for (c, v) in &req.pins {
        base.insert(c.clone(), resolve(dataset, c, v)?);
    }
    let mut conditions = Vec::new();
    for (c, v) in &req.group {
        let v = resolve(dataset, c, v)?;
        match req.mode {
            ApeMode::Pinned => {
                base.insert(c.clone(), v);
            }
            ApeMode::Subsample => conditions.push((c.clone(), v)),
        }
    }
    if base.contains_key(&req.target) {
        return Err(Error::Effect(format!("target `{}` cannot also be pinned", req.target)));
    }
    let mut treated_rows = Vec::new();
    let mut control_rows = Vec::new();
    let mut hi = base.clone();
    hi.insert(req.target.clone(), to);
    let mut lo = base;
    lo.insert(req.target.clone(), from);
    for &r in &rows {
        if !matches(dataset, r, &conditions)? {
            continue;
        }
        // Rows whose remaining covariates are missing do not enter.
        if let (Some(a), Some(b)) = (layout.row_values(dataset, r, &hi)?, layout.row_values(dataset, r, &lo)?) {
            treated_rows.push(a);
            control_rows.push(b);
        }
    }
    if treated_rows.is_empty() {
        return Err(Error::Effect(format!("empty subsample for `{}`", req.display_label())));
    }
    let to_matrix = |rows: Vec<Vec<f64>>| {
        let n = rows.len();
        DMatrix::from_row_iterator(n, layout.width(), rows.into_iter().flatten())
    };
    Ok(Counterfactual {
        treated: to_matrix(treated_rows),
        control: to_matrix(control_rows),
    })
}

fn evaluate(result: &EstimationResult, dataset: &Dataset, req: &ApeRequest) -> Result<ApeResult> {
    let cf = counterfactual(result, dataset, req)?;
    let (kind, cov) = effect_covariance(result)?;
    let block = result
        .layout
        .block_range(EquationKind::CurrentJob)
        .ok_or_else(|| Error::Effect("model has no current-job equation".into()))?;
    let (value, se) = cf.ape_with_se(result.estimate.as_slice(), block, cov)?;
    Ok(ApeResult::new(req.display_label(), value, se, cf.n_rows(), kind))
}

/// APE of an exogenous dummy or categorical level.
pub fn ape_dummy(result: &EstimationResult, dataset: &Dataset, request: &ApeRequest) -> Result<ApeResult> {
    if Some(request.target.as_str()) == result.spec.outcome(EquationKind::FirstJob) {
        return ape_endogenous(result, dataset, request);
    }
    evaluate(result, dataset, request)
}

/// APE of the first-job outcome on the current-job probability, toggling
/// `y_f` and its interactions in the structural index.
pub fn ape_endogenous(result: &EstimationResult, dataset: &Dataset, request: &ApeRequest) -> Result<ApeResult> {
    let yf = result
        .spec
        .outcome(EquationKind::FirstJob)
        .ok_or_else(|| Error::Effect("model has no first-job equation".into()))?;
    if request.target != yf {
        return Err(Error::Effect(format!("`{}` is not the first-job outcome `{yf}`", request.target)));
    }
    if !result.spec.current_job.endogenous.contains(&EquationKind::FirstJob) {
        return Err(Error::Effect("the current-job equation has no first-job regressor".into()));
    }
    evaluate(result, dataset, request)
}

/// Grid of conditional APEs, one per (row level × condition setting) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApeGrid {
    pub target: String,
    pub row_factor: String,
    pub conditions: Vec<String>,
    /// Row labels in level order, reference included.
    pub rows: Vec<String>,
    /// Condition settings in binary counting order.
    pub settings: Vec<Vec<u8>>,
    /// `cells[row][setting]`.
    pub cells: Vec<Vec<ApeResult>>,
}

impl ApeGrid {
    pub fn setting_label(&self, s: usize) -> String {
        self.conditions
            .iter()
            .zip(&self.settings[s])
            .map(|(c, v)| format!("{c}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn flatten(&self) -> Vec<ApeResult> {
        self.cells.iter().flatten().cloned().collect()
    }
}

/// Conditional effects of a binary indicator by levels of a categorical
/// factor and settings of binary conditioning indicators. Each cell
/// averages over the rows in that cell. The model must interact the target
/// with the row factor and every condition.
pub fn ape_grid(result: &EstimationResult, dataset: &Dataset, request: &GridRequest) -> Result<ApeGrid> {
    let layout = estimation_rows(result, dataset)?.0;
    let row_col = dataset.column(&request.row_factor)?;
    let levels = row_col
        .levels()
        .ok_or_else(|| Error::Effect(format!("row factor `{}` is not categorical", request.row_factor)))?
        .to_vec();
    for cond in &request.conditions {
        let triple = layout.columns.iter().any(|c| {
            let cols: Vec<&str> = c.factors.iter().map(|f| f.column()).collect();
            cols.contains(&request.target.as_str())
                && cols.contains(&request.row_factor.as_str())
                && cols.contains(&cond.as_str())
        });
        if !triple {
            return Err(Error::Effect(format!(
                "the current-job equation has no `{}:{}:{cond}` interaction",
                request.target, request.row_factor
            )));
        }
    }
    let k = request.conditions.len();
    let settings: Vec<Vec<u8>> = (0..1usize << k)
        .map(|m| (0..k).rev().map(|b| ((m >> b) & 1) as u8).collect())
        .collect();
    let mut cells = Vec::with_capacity(levels.len());
    for level in &levels {
        let mut row = Vec::with_capacity(settings.len());
        for s in &settings {
            let mut group = BTreeMap::new();
            group.insert(request.row_factor.clone(), CellValue::Text(level.code.clone()));
            for (c, &v) in request.conditions.iter().zip(s) {
                group.insert(c.clone(), CellValue::Number(v as f64));
            }
            let label = std::iter::once(format!("{}={}", request.row_factor, level.label))
                .chain(request.conditions.iter().zip(s).map(|(c, v)| format!("{c}={v}")))
                .collect::<Vec<_>>()
                .join(",");
            let req = ApeRequest {
                label: Some(label.clone()),
                target: request.target.clone(),
                group,
                mode: ApeMode::Subsample,
                ..ApeRequest::binary(&request.target)
            };
            let r = evaluate(result, dataset, &req).map_err(|e| match e {
                Error::Effect(m) if m.starts_with("empty subsample") => {
                    Error::Effect(format!("empty cell {label}"))
                }
                other => other,
            })?;
            row.push(r);
        }
        cells.push(row);
    }
    Ok(ApeGrid {
        target: request.target.clone(),
        row_factor: request.row_factor.clone(),
        conditions: request.conditions.clone(),
        rows: levels.into_iter().map(|l| l.label).collect(),
        settings,
        cells,
    })
}
