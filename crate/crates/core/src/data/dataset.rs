use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub code: String,
    pub label: String,
}

/// Encoding of a column. Categorical values are stored as level indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Binary,
    Categorical { levels: Vec<Level> },
    Ordinal {
        #[serde(default = "default_ordinal_levels")]
        levels: Vec<i64>,
    },
    Numeric,
}

pub(crate) fn default_ordinal_levels() -> Vec<i64> {
    (1..=5).collect()
}

impl ColumnKind {
    /// Resolves a level by code or label.
    pub fn level_index(&self, key: &str) -> Option<usize> {
        match self {
            ColumnKind::Categorical { levels } => levels
                .iter()
                .position(|l| l.code == key)
                .or_else(|| levels.iter().position(|l| l.label == key)),
            _ => None,
        }
    }
}

/// A named column; missing values are NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(with = "missing_as_null")]
    pub values: Vec<f64>,
}

/// Missing values travel as `null`.
mod missing_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opt: Vec<Option<f64>> = v.iter().map(|x| (!x.is_nan()).then_some(*x)).collect();
        opt.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opt: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(opt.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            kind,
            values,
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        self.values[row].is_nan()
    }

    pub fn levels(&self) -> Option<&[Level]> {
        match &self.kind {
            ColumnKind::Categorical { levels } => Some(levels),
            _ => None,
        }
    }

    /// Checks the values against the kind.
    pub fn validate(&self) -> Result<()> {
        for (row, &v) in self.values.iter().enumerate() {
            if v.is_nan() {
                continue;
            }
            let ok = match &self.kind {
                ColumnKind::Binary => v == 0.0 || v == 1.0,
                ColumnKind::Categorical { levels } => v >= 0.0 && v.fract() == 0.0 && (v as usize) < levels.len(),
                ColumnKind::Ordinal { levels } => levels.iter().any(|&l| l as f64 == v),
                ColumnKind::Numeric => v.is_finite(),
            };
            if !ok {
                return Err(Error::Cell {
                    row,
                    column: self.name.clone(),
                    message: format!("value {v} is not valid for a {} column", self.kind_name()),
                });
            }
        }
        Ok(())
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ColumnKind::Binary => "binary",
            ColumnKind::Categorical { .. } => "categorical",
            ColumnKind::Ordinal { .. } => "ordinal",
            ColumnKind::Numeric => "numeric",
        }
    }
}

/// Column-major table with stable row identifiers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    columns: Vec<Column>,
    row_ids: Vec<u64>,
    #[serde(default)]
    pub provenance: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(row_ids: Vec<u64>) -> Self {
        Self {
            columns: Vec::new(),
            row_ids,
            provenance: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Dataset with row ids `0..n`.
    pub fn with_rows(n: usize) -> Self {
        Self::new((0..n as u64).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.lookup(name).is_some()
    }

    fn lookup(&self, name: &str) -> Option<usize> {
        if self.index.len() == self.columns.len() {
            self.index.get(name).copied()
        } else {
            self.columns.iter().position(|c| c.name == name)
        }
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.lookup(name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Adds a column, replacing any column of the same name.
    pub fn push_column(&mut self, column: Column) -> Result<()> {
        if column.values.len() != self.n_rows() {
            return Err(Error::dimension(
                format!("column `{}`", column.name),
                self.n_rows(),
                column.values.len(),
            ));
        }
        column.validate()?;
        if let Some(i) = self.lookup(&column.name) {
            self.columns[i] = column;
        } else {
            self.index.insert(column.name.clone(), self.columns.len());
            self.columns.push(column);
        }
        Ok(())
    }

    /// Value lookup; missing is NaN.
    pub fn value(&self, name: &str, row: usize) -> Result<f64> {
        Ok(self.column(name)?.values[row])
    }

    /// New dataset containing the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let mut out = Dataset::new(rows.iter().map(|&r| self.row_ids[r]).collect());
        out.provenance = self.provenance.clone();
        for c in &self.columns {
            let values = rows.iter().map(|&r| c.values[r]).collect();
            out.index.insert(c.name.clone(), out.columns.len());
            out.columns.push(Column::new(c.name.clone(), c.kind.clone(), values));
        }
        out
    }

    /// Rebuilds the name index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.clone(), i))
            .collect();
    }

    /// Writes the dataset as CSV. Categorical values are written as level
    /// codes, numbers in shortest round-trip form.
    pub fn write_csv<W: std::io::Write>(&self, writer: W, id_column: &str, missing: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![id_column.to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for row in 0..self.n_rows() {
            record.clear();
            record.push(self.row_ids[row].to_string());
            for c in &self.columns {
                let v = c.values[row];
                record.push(if v.is_nan() {
                    missing.to_string()
                } else {
                    match &c.kind {
                        ColumnKind::Categorical { levels } => levels[v as usize].code.clone(),
                        _ => format!("{v}"),
                    }
                });
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}
