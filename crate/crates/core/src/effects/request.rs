use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A covariate value: a number, or a level code/label for categoricals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellValue {
    Number(f64),
    Text(String),
}

impl std::fmt::Display for CellValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellValue::Number(v) => write!(f, "{v}"),
            CellValue::Text(s) => f.write_str(s),
        }
    }
}

/// How a `group` restriction is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApeMode {
    /// Average over the whole estimation sample with the group columns
    /// overridden to the group values.
    #[default]
    Pinned,
    /// Average over the rows that belong to the group.
    Subsample,
}

/// One discrete-change effect. Binary targets move 0→1, categorical
/// targets move reference→`level`, numeric targets move `from`→`to`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApeRequest {
    #[serde(default)]
    pub label: Option<String>,
    pub target: String,
    #[serde(default)]
    pub level: Option<String>,
    #[serde(default)]
    pub from: f64,
    #[serde(default = "one")]
    pub to: f64,
    /// Columns overridden on every row.
    #[serde(default)]
    pub pins: BTreeMap<String, CellValue>,
    #[serde(default)]
    pub group: BTreeMap<String, CellValue>,
    #[serde(default)]
    pub mode: ApeMode,
    /// Interaction columns expected to move with the target; checked, the
    /// update itself is automatic.
    #[serde(default)]
    pub interactions: Vec<String>,
}

fn one() -> f64 {
    1.0
}

impl ApeRequest {
    pub fn binary(target: &str) -> Self {
        Self {
            label: None,
            target: target.to_string(),
            level: None,
            from: 0.0,
            to: 1.0,
            pins: BTreeMap::new(),
            group: BTreeMap::new(),
            mode: ApeMode::Pinned,
            interactions: Vec::new(),
        }
    }

    pub fn level(target: &str, level: &str) -> Self {
        Self {
            level: Some(level.to_string()),
            ..Self::binary(target)
        }
    }

    pub fn with_group(mut self, column: &str, value: CellValue, mode: ApeMode) -> Self {
        self.group.insert(column.to_string(), value);
        self.mode = mode;
        self
    }

    pub fn display_label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let mut s = match &self.level {
            Some(l) => format!("{}[{l}]", self.target),
            None => self.target.clone(),
        };
        if !self.group.is_empty() {
            let g: Vec<String> = self.group.iter().map(|(k, v)| format!("{k}={v}")).collect();
            s.push_str(&format!(" | {}", g.join(",")));
        }
        s
    }
}

/// Conditional grid request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRequest {
    pub target: String,
    pub row_factor: String,
    #[serde(default)]
    pub conditions: Vec<String>,
}

/// File of effect requests.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectsFile {
    #[serde(default, rename = "effect")]
    pub effects: Vec<ApeRequest>,
    #[serde(default)]
    pub grid: Option<GridRequest>,
}

impl EffectsFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: "<effects>".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::data::read_text(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}
