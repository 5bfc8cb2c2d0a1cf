use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::spec::{EquationKind, EquationSpec, ModelMode, ModelSpec};
use crate::data::{Column, ColumnKind, Dataset};
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(intercept)";

/// One multiplicative component of a design column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "factor", rename_all = "snake_case")]
pub enum Factor {
    /// The raw value of a binary, ordinal, numeric or outcome column.
    Value { column: String },
    /// Indicator that a categorical column equals a level index.
    Level { column: String, level: usize, label: String },
}

impl Factor {
    pub fn column(&self) -> &str {
        match self {
            Factor::Value { column } | Factor::Level { column, .. } => column,
        }
    }

    fn name(&self) -> String {
        match self {
            Factor::Value { column } => column.clone(),
            Factor::Level { column, label, .. } => format!("{column}[{label}]"),
        }
    }

    #[inline]
    fn eval(&self, raw: f64) -> f64 {
        match self {
            Factor::Value { .. } => raw,
            Factor::Level { level, .. } => {
                if raw == *level as f64 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// A design column is the product of its factors; no factors is the intercept.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignColumn {
    pub name: String,
    pub factors: Vec<Factor>,
}

impl DesignColumn {
    pub fn intercept() -> Self {
        Self {
            name: INTERCEPT.to_string(),
            factors: Vec::new(),
        }
    }

    pub fn is_intercept(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn involves(&self, column: &str) -> bool {
        self.factors.iter().any(|f| f.column() == column)
    }
}

/// Raw-value substitutions used to build counterfactual rows.
pub type Overrides = BTreeMap<String, f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquationLayout {
    pub kind: EquationKind,
    pub outcome: String,
    pub columns: Vec<DesignColumn>,
}

impl EquationLayout {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Source columns used by any design column.
    pub fn source_columns(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.columns {
            for f in &c.factors {
                if !out.contains(&f.column()) {
                    out.push(f.column());
                }
            }
        }
        out
    }

    /// Design row for dataset row `row`, with overrides applied to the raw
    /// source values. `None` when a needed value is missing.
    pub fn row_values(&self, dataset: &Dataset, row: usize, overrides: &Overrides) -> Result<Option<Vec<f64>>> {
        let mut out = Vec::with_capacity(self.columns.len());
        for c in &self.columns {
            let mut v = 1.0;
            for f in &c.factors {
                let raw = match overrides.get(f.column()) {
                    Some(&o) => o,
                    None => dataset.value(f.column(), row)?,
                };
                if raw.is_nan() {
                    return Ok(None);
                }
                v *= f.eval(raw);
            }
            out.push(v);
        }
        Ok(Some(out))
    }
}

/// Design matrix of one equation. Rows whose covariates are incomplete are
/// zero-filled and flagged in `complete`.
#[derive(Clone, Debug, PartialEq)]
pub struct EquationDesign {
    pub layout: EquationLayout,
    pub matrix: DMatrix<f64>,
    pub complete: Vec<bool>,
}

/// Estimation-ready design. Row `i` corresponds to dataset row `rows[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrices {
    pub mode: ModelMode,
    pub first_job: EquationDesign,
    pub employment: Option<EquationDesign>,
    pub current_job: EquationDesign,
    pub y_f: Vec<f64>,
    /// Employment indicator; all ones in bivariate mode.
    pub employed: Vec<f64>,
    /// Current-job outcome; NaN exactly when `employed` is 0.
    pub y_c: Vec<f64>,
    pub rows: Vec<usize>,
    pub row_ids: Vec<u64>,
    pub clusters: Option<Vec<u64>>,
    pub warnings: Vec<String>,
}

impl DesignMatrices {
    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        match self.mode {
            ModelMode::Trivariate => 3,
            ModelMode::Bivariate => 2,
        }
    }

    pub fn equations(&self) -> Vec<&EquationDesign> {
        let mut out = vec![&self.first_job];
        if let Some(e) = &self.employment {
            out.push(e);
        }
        out.push(&self.current_job);
        out
    }

    pub fn equation(&self, kind: EquationKind) -> Option<&EquationDesign> {
        self.equations().into_iter().find(|e| e.layout.kind == kind)
    }

    /// Whether row `i` contributes a current-job outcome.
    pub fn selected(&self, i: usize) -> bool {
        self.employed[i] == 1.0
    }
}

fn expand_term(
    dataset: &Dataset,
    spec: &ModelSpec,
    factors: &[&str],
) -> Result<Vec<DesignColumn>> {
    let mut columns = vec![DesignColumn {
        name: String::new(),
        factors: Vec::new(),
    }];
    for &name in factors {
        let col = dataset.column(name)?;
        let expanded: Vec<Factor> = match &col.kind {
            ColumnKind::Categorical { levels } => {
                let reference = spec.references.get(name).ok_or_else(|| {
                    Error::Spec(format!("categorical column `{name}` has no declared reference level"))
                })?;
                let ref_idx = col.kind.level_index(reference).ok_or_else(|| {
                    Error::Spec(format!("reference `{reference}` is not a level of `{name}`"))
                })?;
                levels
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != ref_idx)
                    .map(|(i, l)| Factor::Level {
                        column: name.to_string(),
                        level: i,
                        label: l.label.clone(),
                    })
                    .collect()
            }
            _ => vec![Factor::Value {
                column: name.to_string(),
            }],
        };
        let mut next = Vec::with_capacity(columns.len() * expanded.len());
        for base in &columns {
            for f in &expanded {
                let mut factors = base.factors.clone();
                factors.push(f.clone());
                let name = factors.iter().map(Factor::name).collect::<Vec<_>>().join(":");
                next.push(DesignColumn { name, factors });
            }
        }
        columns = next;
    }
    Ok(columns)
}

pub(crate) fn equation_layout(
    dataset: &Dataset,
    spec: &ModelSpec,
    kind: EquationKind,
    eq: &EquationSpec,
) -> Result<EquationLayout> {
    let outcome = spec
        .outcome(kind)
        .ok_or_else(|| Error::Spec(format!("equation {kind} has no outcome column")))?
        .to_string();
    let mut columns = vec![DesignColumn::intercept()];
    for &src in &eq.endogenous {
        let name = spec
            .outcome(src)
            .ok_or_else(|| Error::Spec(format!("endogenous regressor {src} is not an active equation")))?;
        dataset.column(name)?;
        columns.push(DesignColumn {
            name: name.to_string(),
            factors: vec![Factor::Value {
                column: name.to_string(),
            }],
        });
    }
    for factors in eq.term_factors() {
        if factors.iter().any(|f| f.is_empty()) {
            return Err(Error::Spec(format!("empty factor in a term of equation {kind}")));
        }
        if factors.contains(&outcome.as_str()) {
            return Err(Error::Spec(format!(
                "term `{}` in equation {kind} references its own outcome",
                factors.join(":")
            )));
        }
        for c in expand_term(dataset, spec, &factors)? {
            if columns.iter().any(|e| e.name == c.name) {
                return Err(Error::Spec(format!("duplicate design column `{}` in equation {kind}", c.name)));
            }
            columns.push(c);
        }
    }
    Ok(EquationLayout { kind, outcome, columns })
}

fn binary_outcome(col: &Column, row: usize) -> Result<f64> {
    let v = col.values[row];
    if v.is_nan() || v == 0.0 || v == 1.0 {
        Ok(v)
    } else {
        Err(Error::Cell {
            row,
            column: col.name.clone(),
            message: format!("outcome value {v} is not 0/1"),
        })
    }
}

fn fill(layout: EquationLayout, dataset: &Dataset, rows: &[usize]) -> Result<EquationDesign> {
    let mut matrix = DMatrix::zeros(rows.len(), layout.width());
    let mut complete = vec![false; rows.len()];
    let none = Overrides::new();
    for (i, &r) in rows.iter().enumerate() {
        if let Some(values) = layout.row_values(dataset, r, &none)? {
            for (j, v) in values.into_iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Cell {
                        row: r,
                        column: layout.columns[j].name.clone(),
                        message: "non-finite design value".into(),
                    });
                }
                matrix[(i, j)] = v;
            }
            complete[i] = true;
        }
    }
    Ok(EquationDesign {
        layout,
        matrix,
        complete,
    })
}

fn constant_columns(design: &EquationDesign, mask: impl Fn(usize) -> bool) -> Vec<String> {
    let mut out = Vec::new();
    for (j, c) in design.layout.columns.iter().enumerate() {
        if c.is_intercept() {
            continue;
        }
        let mut first: Option<f64> = None;
        let mut varies = false;
        for i in 0..design.matrix.nrows() {
            if !mask(i) {
                continue;
            }
            let v = design.matrix[(i, j)];
            match first {
                None => first = Some(v),
                Some(f) if f != v => {
                    varies = true;
                    break;
                }
                _ => {}
            }
        }
        if !varies {
            out.push(format!(
                "{}: column `{}` is constant over the estimation sample",
                design.layout.kind, c.name
            ));
        }
    }
    out
}

/// Builds the design matrices for `spec` on `dataset`.
///
/// Rows lacking the first-job or employment outcome, or any covariate of
/// those equations, are dropped with a warning; so are employed rows whose
/// current-job covariates are incomplete. In bivariate mode rows without a
/// current-job outcome are dropped.
pub fn build_design(dataset: &Dataset, spec: &ModelSpec) -> Result<DesignMatrices> {
    spec.check_structure()?;
    let mut warnings = Vec::new();
    let layouts: Vec<EquationLayout> = spec
        .equations()
        .into_iter()
        .map(|(k, eq)| equation_layout(dataset, spec, k, eq))
        .collect::<Result<_>>()?;

    let yf_col = dataset.column(&spec.outcomes.first_job)?;
    let yc_col = dataset.column(&spec.outcomes.current_job)?;
    let e_col = match spec.mode {
        ModelMode::Trivariate => Some(dataset.column(spec.outcomes.employment.as_deref().unwrap_or_default())?),
        ModelMode::Bivariate => None,
    };
    let cluster_col = spec.cluster.as_deref().map(|c| dataset.column(c)).transpose()?;

    let none = Overrides::new();
    let mut rows = Vec::new();
    let mut dropped_outcome = 0usize;
    let mut dropped_covariate = 0usize;
    let mut dropped_cluster = 0usize;
    'rows: for r in 0..dataset.n_rows() {
        let yf = binary_outcome(yf_col, r)?;
        let yc = binary_outcome(yc_col, r)?;
        let e = match e_col {
            Some(c) => binary_outcome(c, r)?,
            None => 1.0,
        };
        if e_col.is_some() && !e.is_nan() {
            if e == 0.0 && !yc.is_nan() {
                return Err(Error::Row {
                    row: r,
                    message: format!(
                        "`{}` is observed although `{}` is 0",
                        yc_col.name,
                        e_col.map(|c| c.name.as_str()).unwrap_or_default()
                    ),
                });
            }
            if e == 1.0 && yc.is_nan() {
                return Err(Error::Row {
                    row: r,
                    message: format!(
                        "`{}` is missing although `{}` is 1",
                        yc_col.name,
                        e_col.map(|c| c.name.as_str()).unwrap_or_default()
                    ),
                });
            }
        }
        if yf.is_nan() || e.is_nan() || (e == 1.0 && yc.is_nan()) {
            dropped_outcome += 1;
            continue;
        }
        for layout in &layouts {
            let needed = layout.kind != EquationKind::CurrentJob || e == 1.0;
            if needed && layout.row_values(dataset, r, &none)?.is_none() {
                dropped_covariate += 1;
                continue 'rows;
            }
        }
        if let Some(c) = cluster_col {
            if c.values[r].is_nan() {
                dropped_cluster += 1;
                continue;
            }
        }
        rows.push(r);
    }
    if dropped_outcome > 0 {
        warnings.push(format!("{dropped_outcome} rows dropped: missing outcome"));
    }
    if dropped_covariate > 0 {
        warnings.push(format!("{dropped_covariate} rows dropped: missing covariate"));
    }
    if dropped_cluster > 0 {
        warnings.push(format!("{dropped_cluster} rows dropped: missing cluster id"));
    }
    if rows.is_empty() {
        return Err(Error::Spec("no usable rows for estimation".into()));
    }

    let mut designs = layouts
        .into_iter()
        .map(|l| fill(l, dataset, &rows))
        .collect::<Result<Vec<_>>>()?;
    let current_job = designs.pop().expect("current_job design");
    let employment = if spec.mode == ModelMode::Trivariate {
        designs.pop()
    } else {
        None
    };
    let first_job = designs.pop().expect("first_job design");

    let y_f: Vec<f64> = rows.iter().map(|&r| yf_col.values[r]).collect();
    let employed: Vec<f64> = match e_col {
        Some(c) => rows.iter().map(|&r| c.values[r]).collect(),
        None => vec![1.0; rows.len()],
    };
    let y_c: Vec<f64> = rows
        .iter()
        .zip(&employed)
        .map(|(&r, &e)| if e == 1.0 { yc_col.values[r] } else { f64::NAN })
        .collect();

    warnings.extend(constant_columns(&first_job, |_| true));
    if let Some(e) = &employment {
        warnings.extend(constant_columns(e, |_| true));
    }
    warnings.extend(constant_columns(&current_job, |i| employed[i] == 1.0));

    let clusters = cluster_col.map(|c| rows.iter().map(|&r| c.values[r].to_bits()).collect());
    let row_ids = rows.iter().map(|&r| dataset.row_ids()[r]).collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(DesignMatrices {
        mode: spec.mode,
        first_job,
        employment,
        current_job,
        y_f,
        employed,
        y_c,
        rows,
        row_ids,
        clusters,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Level;

    fn levels(labels: &[&str]) -> ColumnKind {
        ColumnKind::Categorical {
            levels: labels
                .iter()
                .enumerate()
                .map(|(i, l)| Level {
                    code: (i + 1).to_string(),
                    label: l.to_string(),
                })
                .collect(),
        }
    }

    fn toy() -> (Dataset, ModelSpec) {
        let mut d = Dataset::with_rows(3);
        d.push_column(Column::new("yf", ColumnKind::Binary, vec![1.0, 0.0, 1.0])).unwrap();
        d.push_column(Column::new("emp", ColumnKind::Binary, vec![1.0, 0.0, 1.0])).unwrap();
        d.push_column(Column::new("yc", ColumnKind::Binary, vec![0.0, f64::NAN, 1.0])).unwrap();
        d.push_column(Column::new("field", levels(&["arts", "science", "health"]), vec![2.0, 0.0, 1.0]))
            .unwrap();
        d.push_column(Column::new("wave", ColumnKind::Binary, vec![1.0, 1.0, 0.0])).unwrap();
        let spec = ModelSpec::from_toml_str(
            r#"
[outcomes]
first_job = "yf"
employment = "emp"
current_job = "yc"
[references]
field = "arts"
[first_job]
terms = ["field"]
[employment]
endogenous = ["first_job"]
terms = ["wave"]
[current_job]
endogenous = ["first_job"]
terms = ["wave", "field:wave", "yf:wave"]
"#,
        )
        .unwrap();
        (d, spec)
    }

    #[test]
    fn hand_expansion_of_categorical() {
        let (d, spec) = toy();
        let m = build_design(&d, &spec).unwrap();
        let x = &m.first_job.matrix;
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(x, &expected);
        assert_eq!(
            m.first_job.layout.names(),
            vec!["(intercept)", "field[science]", "field[health]"]
        );
    }

    #[test]
    fn interactions_are_products() {
        let (d, spec) = toy();
        let m = build_design(&d, &spec).unwrap();
        let names = m.current_job.layout.names();
        assert_eq!(
            names,
            vec![
                "(intercept)",
                "yf",
                "wave",
                "field[science]:wave",
                "field[health]:wave",
                "yf:wave"
            ]
        );
        let x = &m.current_job.matrix;
        assert_eq!(x[(0, 4)], 1.0);
        assert_eq!(x[(2, 3)], 0.0);
        assert_eq!(x[(0, 5)], 1.0);
        assert!(m.y_c[1].is_nan());
        assert_eq!(m.employed, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn selection_violation_is_an_error() {
        let (mut d, spec) = toy();
        d.push_column(Column::new("yc", ColumnKind::Binary, vec![0.0, 1.0, 1.0])).unwrap();
        assert!(matches!(build_design(&d, &spec), Err(Error::Row { row: 1, .. })));
        d.push_column(Column::new("yc", ColumnKind::Binary, vec![f64::NAN, f64::NAN, 1.0]))
            .unwrap();
        assert!(matches!(build_design(&d, &spec), Err(Error::Row { row: 0, .. })));
    }

    #[test]
    fn unknown_column_and_missing_reference() {
        let (d, mut spec) = toy();
        spec.first_job.terms.push("nope".into());
        assert!(matches!(build_design(&d, &spec), Err(Error::UnknownColumn(c)) if c == "nope"));
        let (d, mut spec) = toy();
        spec.references.clear();
        assert!(matches!(build_design(&d, &spec), Err(Error::Spec(_))));
    }

    #[test]
    fn constant_column_warns() {
        let (d, mut spec) = toy();
        spec.first_job.terms.push("wave".into());
        let mut d2 = d.clone();
        d2.push_column(Column::new("wave", ColumnKind::Binary, vec![1.0, 1.0, 1.0])).unwrap();
        let m = build_design(&d2, &spec).unwrap();
        assert!(m.warnings.iter().any(|w| w.contains("`wave`")));
    }

    #[test]
    fn overrides_recompute_interactions() {
        let (d, spec) = toy();
        let m = build_design(&d, &spec).unwrap();
        let mut o = Overrides::new();
        o.insert("yf".into(), 0.0);
        let row = m.current_job.layout.row_values(&d, 0, &o).unwrap().unwrap();
        assert_eq!(row[1], 0.0);
        assert_eq!(row[5], 0.0);
        assert_eq!(row[4], 1.0);
    }
}
