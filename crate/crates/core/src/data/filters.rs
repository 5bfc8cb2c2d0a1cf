use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{ColumnKind, Dataset};
use crate::error::{Error, Result};

/// A scalar in a filter rule; matched against level codes or labels for
/// categorical columns and numerically otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

/// Rows satisfying the predicate are removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "when", rename_all = "snake_case")]
pub enum Predicate {
    Equals { column: String, value: Scalar },
    OneOf { column: String, values: Vec<Scalar> },
    MissingAny { columns: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropRule {
    pub label: String,
    #[serde(flatten)]
    pub predicate: Predicate,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(default)]
    pub drop: Vec<DropRule>,
}

impl FilterSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: "<filters>".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = super::read_text(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterLog {
    pub rows_in: usize,
    /// `(label, rows removed by this rule)` in application order.
    pub removed: Vec<(String, usize)>,
    pub rows_out: usize,
}

impl FilterLog {
    pub fn render(&self) -> String {
        let mut s = format!("rows in: {}\n", self.rows_in);
        for (label, n) in &self.removed {
            s.push_str(&format!("  dropped {n:>8}  {label}\n"));
        }
        s.push_str(&format!("rows out: {}\n", self.rows_out));
        s
    }
}

fn matches(kind: &ColumnKind, v: f64, target: &Scalar) -> bool {
    if v.is_nan() {
        return false;
    }
    match (kind, target) {
        (ColumnKind::Categorical { levels }, Scalar::Text(t)) => {
            let l = &levels[v as usize];
            &l.code == t || &l.label == t
        }
        (ColumnKind::Categorical { levels }, Scalar::Number(x)) => levels[v as usize]
            .code
            .parse::<f64>()
            .map(|c| c == *x)
            .unwrap_or(false),
        (_, Scalar::Number(x)) => v == *x,
        (_, Scalar::Text(t)) => t.parse::<f64>().map(|x| x == v).unwrap_or(false),
    }
}

/// Removes rows matching any rule, applied in order; the log counts rows
/// removed by each rule.
pub fn apply_filters(dataset: &Dataset, spec: &FilterSpec) -> Result<(Dataset, FilterLog)> {
    let mut keep: Vec<usize> = (0..dataset.n_rows()).collect();
    let mut log = FilterLog {
        rows_in: dataset.n_rows(),
        ..Default::default()
    };
    for rule in &spec.drop {
        let before = keep.len();
        match &rule.predicate {
            Predicate::Equals { column, value } => {
                let c = dataset.column(column)?;
                keep.retain(|&r| !matches(&c.kind, c.values[r], value));
            }
            Predicate::OneOf { column, values } => {
                let c = dataset.column(column)?;
                keep.retain(|&r| !values.iter().any(|v| matches(&c.kind, c.values[r], v)));
            }
            Predicate::MissingAny { columns } => {
                let cols = columns
                    .iter()
                    .map(|c| dataset.column(c))
                    .collect::<Result<Vec<_>>>()?;
                keep.retain(|&r| !cols.iter().any(|c| c.is_missing(r)));
            }
        }
        log.removed.push((rule.label.clone(), before - keep.len()));
    }
    log.rows_out = keep.len();
    if keep.is_empty() && dataset.n_rows() > 0 {
        log::warn!("filters removed every row");
    }
    let mut out = dataset.select_rows(&keep);
    out.provenance.push(format!("filters: {} -> {} rows", log.rows_in, log.rows_out));
    Ok((out, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::{Column, Level};

    fn data() -> Dataset {
        let mut d = Dataset::with_rows(4);
        d.push_column(Column::new("military", ColumnKind::Binary, vec![0.0, 1.0, 0.0, 0.0]))
            .unwrap();
        d.push_column(Column::new(
            "region",
            ColumnKind::Categorical {
                levels: vec![
                    Level { code: "1".into(), label: "EU".into() },
                    Level { code: "2".into(), label: "Outside EU".into() },
                ],
            },
            vec![0.0, 0.0, 1.0, 0.0],
        ))
        .unwrap();
        d.push_column(Column::new("x", ColumnKind::Numeric, vec![1.0, 2.0, 3.0, f64::NAN]))
            .unwrap();
        d
    }

    #[test]
    fn drops_and_logs_each_rule() {
        let spec = FilterSpec::from_toml_str(
            r#"
[[drop]]
label = "military occupation"
when = "equals"
column = "military"
value = 1

[[drop]]
label = "job outside the EU"
when = "equals"
column = "region"
value = "Outside EU"

[[drop]]
label = "missing values"
when = "missing_any"
columns = ["x"]
"#,
        )
        .unwrap();
        let (out, log) = apply_filters(&data(), &spec).unwrap();
        assert_eq!(out.row_ids(), &[0]);
        assert_eq!(
            log.removed,
            vec![
                ("military occupation".to_string(), 1),
                ("job outside the EU".to_string(), 1),
                ("missing values".to_string(), 1)
            ]
        );
    }

    #[test]
    fn no_rules_is_identity() {
        let d = data();
        let (out, log) = apply_filters(&d, &FilterSpec::default()).unwrap();
        assert_eq!(out.row_ids(), d.row_ids());
        for (a, b) in out.columns().iter().zip(d.columns()) {
            let bits = |c: &Column| c.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(log.rows_out, 4);
    }

    #[test]
    fn everything_filtered_gives_empty_dataset() {
        let spec = FilterSpec {
            drop: vec![DropRule {
                label: "all".into(),
                predicate: Predicate::OneOf {
                    column: "military".into(),
                    values: vec![Scalar::Number(0.0), Scalar::Number(1.0)],
                },
            }],
        };
        let (out, log) = apply_filters(&data(), &spec).unwrap();
        assert_eq!(out.n_rows(), 0);
        assert_eq!(log.rows_out, 0);
    }
}
