use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{Column, ColumnKind, Dataset};
use crate::error::{Error, Result};

/// Declared column: name plus encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

/// Ordinal source at or above `threshold` becomes 1, below becomes 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedRule {
    pub name: String,
    pub source: String,
    #[serde(default = "default_threshold")]
    pub threshold: i64,
}

fn default_threshold() -> i64 {
    4
}

/// Variable dictionary for CSV ingestion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    #[serde(default)]
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub derived: Vec<DerivedRule>,
}

fn default_missing() -> Vec<String> {
    vec![String::new(), "NA".to_string()]
}

impl Codebook {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cb: Codebook = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<codebook>".into(),
            message: e.to_string(),
        })?;
        cb.validate()?;
        Ok(cb)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = super::read_text(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("codebook serializes")
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Codebook(format!("column `{}` declared twice", c.name)));
            }
            match &c.kind {
                ColumnKind::Categorical { levels } if levels.is_empty() => {
                    return Err(Error::Codebook(format!("column `{}` has no levels", c.name)))
                }
                ColumnKind::Ordinal { levels } if levels.is_empty() => {
                    return Err(Error::Codebook(format!("column `{}` has no levels", c.name)))
                }
                _ => {}
            }
        }
        for rule in &self.derived {
            match self.column(&rule.source) {
                Some(ColumnSpec {
                    kind: ColumnKind::Ordinal { .. },
                    ..
                }) => {}
                Some(_) => {
                    return Err(Error::Codebook(format!(
                        "derived `{}`: source `{}` is not ordinal",
                        rule.name, rule.source
                    )))
                }
                None => {
                    return Err(Error::Codebook(format!(
                        "derived `{}` references undeclared column `{}`",
                        rule.name, rule.source
                    )))
                }
            }
            if seen.contains(rule.name.as_str()) {
                return Err(Error::Codebook(format!(
                    "derived `{}` collides with a declared column",
                    rule.name
                )));
            }
        }
        Ok(())
    }

    /// Codebook describing an in-memory dataset.
    pub fn from_dataset(dataset: &Dataset, id_column: &str) -> Self {
        Self {
            missing: default_missing(),
            id_column: Some(id_column.to_string()),
            columns: dataset
                .columns()
                .iter()
                .map(|c| ColumnSpec {
                    name: c.name.clone(),
                    kind: c.kind.clone(),
                })
                .collect(),
            derived: Vec::new(),
        }
    }

    pub fn load_csv(&self, path: &Path) -> Result<Dataset> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut ds = self.read_csv(file)?;
        ds.provenance.push(format!("source: {}", path.display()));
        Ok(ds)
    }

    /// Reads and encodes a CSV with a header row.
    pub fn read_csv<R: Read>(&self, reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers()?.clone();
        let position = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::UnknownColumn(format!("{name} (declared in codebook, absent from CSV header)")))
        };
        let id_pos = self.id_column.as_deref().map(position).transpose()?;
        let positions: Vec<usize> = self
            .columns
            .iter()
            .map(|c| position(&c.name))
            .collect::<Result<_>>()?;
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); self.columns.len()];
        let mut row_ids = Vec::new();
        let mut ids_seen = HashSet::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let id = match id_pos {
                Some(p) => {
                    let raw = record.get(p).unwrap_or("").trim();
                    let id: u64 = raw.parse().map_err(|_| Error::Cell {
                        row,
                        column: self.id_column.clone().unwrap_or_default(),
                        message: format!("row id `{raw}` is not a non-negative integer"),
                    })?;
                    if !ids_seen.insert(id) {
                        return Err(Error::Cell {
                            row,
                            column: self.id_column.clone().unwrap_or_default(),
                            message: format!("duplicate row id {id}"),
                        });
                    }
                    id
                }
                None => row as u64,
            };
            row_ids.push(id);
            for ((spec, &p), out) in self.columns.iter().zip(&positions).zip(values.iter_mut()) {
                let raw = record.get(p).unwrap_or("").trim();
                out.push(self.encode_cell(spec, raw, row)?);
            }
        }
        let mut ds = Dataset::new(row_ids);
        for (spec, vals) in self.columns.iter().zip(values) {
            let missing = vals.iter().filter(|v| v.is_nan()).count();
            log::debug!("column `{}`: {} missing of {}", spec.name, missing, vals.len());
            ds.push_column(Column::new(spec.name.clone(), spec.kind.clone(), vals))?;
        }
        log::info!("loaded {} rows, {} columns", ds.n_rows(), ds.columns().len());
        Ok(ds)
    }

    fn encode_cell(&self, spec: &ColumnSpec, raw: &str, row: usize) -> Result<f64> {
        if self.missing.iter().any(|m| m == raw) {
            return Ok(f64::NAN);
        }
        let cell_err = |message: String| Error::Cell {
            row,
            column: spec.name.clone(),
            message,
        };
        let number = || -> Result<f64> {
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| cell_err(format!("cannot parse `{raw}` as a number")))
        };
        match &spec.kind {
            ColumnKind::Binary => {
                let v = number()?;
                if v == 0.0 || v == 1.0 {
                    Ok(v)
                } else {
                    Err(cell_err(format!("binary value `{raw}` is not 0 or 1")))
                }
            }
            ColumnKind::Categorical { levels } => levels
                .iter()
                .position(|l| l.code == raw)
                .map(|i| i as f64)
                .ok_or_else(|| cell_err(format!("undeclared level `{raw}`"))),
            ColumnKind::Ordinal { levels } => {
                let v = number()?;
                if levels.iter().any(|&l| l as f64 == v) {
                    Ok(v)
                } else {
                    Err(cell_err(format!("undeclared level `{raw}`")))
                }
            }
            ColumnKind::Numeric => number(),
        }
    }

    /// Adds one binary column per derived rule; existing outputs are
    /// recomputed, so the operation is idempotent.
    pub fn derive_binaries(&self, dataset: &Dataset) -> Result<Dataset> {
        let mut out = dataset.clone();
        for rule in &self.derived {
            let source = dataset.column(&rule.source)?;
            let mut values = Vec::with_capacity(source.values.len());
            for (row, &v) in source.values.iter().enumerate() {
                if v.is_nan() {
                    values.push(f64::NAN);
                } else if !(1.0..=5.0).contains(&v) || v.fract() != 0.0 {
                    return Err(Error::Cell {
                        row,
                        column: rule.source.clone(),
                        message: format!("level {v} outside the 1-5 scale"),
                    });
                } else {
                    values.push(if v >= rule.threshold as f64 { 1.0 } else { 0.0 });
                }
            }
            out.push_column(Column::new(rule.name.clone(), ColumnKind::Binary, values))?;
        }
        Ok(out)
    }
}
