use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The three equations of the recursive system, in GHK order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationKind {
    FirstJob,
    Employment,
    CurrentJob,
}

impl EquationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EquationKind::FirstJob => "first_job",
            EquationKind::Employment => "employment",
            EquationKind::CurrentJob => "current_job",
        }
    }
}

impl fmt::Display for EquationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelMode {
    #[default]
    Trivariate,
    Bivariate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcomes {
    pub first_job: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub employment: Option<String>,
    pub current_job: String,
}

/// Covariates of one equation. Terms are column names or `:`-joined
/// interactions; categorical columns expand to non-reference dummies.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EquationSpec {
    #[serde(default)]
    pub endogenous: Vec<EquationKind>,
    #[serde(default)]
    pub terms: Vec<String>,
}

impl EquationSpec {
    pub fn term_factors(&self) -> impl Iterator<Item = Vec<&str>> {
        self.terms
            .iter()
            .map(|t| t.split(':').map(str::trim).collect::<Vec<_>>())
    }

    /// Distinct column names used by the terms.
    pub fn base_columns(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for factors in self.term_factors() {
            for f in factors {
                if !out.contains(&f) {
                    out.push(f);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default)]
    pub mode: ModelMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<String>,
    pub outcomes: Outcomes,
    /// Reference level (code or label) for every categorical column used.
    #[serde(default)]
    pub references: BTreeMap<String, String>,
    pub first_job: EquationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub employment: Option<EquationSpec>,
    pub current_job: EquationSpec,
}

impl ModelSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<model spec>".into(),
            message: e.to_string(),
        })?;
        spec.check_structure()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("model spec serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("model spec serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Equation count K.
    pub fn dim(&self) -> usize {
        match self.mode {
            ModelMode::Trivariate => 3,
            ModelMode::Bivariate => 2,
        }
    }

    /// Active equations in GHK order.
    pub fn equations(&self) -> Vec<(EquationKind, &EquationSpec)> {
        let mut out = vec![(EquationKind::FirstJob, &self.first_job)];
        if self.mode == ModelMode::Trivariate {
            if let Some(e) = &self.employment {
                out.push((EquationKind::Employment, e));
            }
        }
        out.push((EquationKind::CurrentJob, &self.current_job));
        out
    }

    pub fn equation(&self, kind: EquationKind) -> Option<&EquationSpec> {
        self.equations().into_iter().find(|(k, _)| *k == kind).map(|(_, e)| e)
    }

    pub fn outcome(&self, kind: EquationKind) -> Option<&str> {
        match kind {
            EquationKind::FirstJob => Some(&self.outcomes.first_job),
            EquationKind::Employment => match self.mode {
                ModelMode::Trivariate => self.outcomes.employment.as_deref(),
                ModelMode::Bivariate => None,
            },
            EquationKind::CurrentJob => Some(&self.outcomes.current_job),
        }
    }

    fn outcome_owner(&self, column: &str) -> Option<EquationKind> {
        [EquationKind::FirstJob, EquationKind::Employment, EquationKind::CurrentJob]
            .into_iter()
            .find(|&k| self.outcome(k) == Some(column))
    }

    /// Two-equation variant without the employment equation.
    pub fn to_bivariate(&self) -> Self {
        let mut s = self.clone();
        s.mode = ModelMode::Bivariate;
        s.employment = None;
        s.outcomes.employment = None;
        let emp = EquationKind::Employment;
        s.first_job.endogenous.retain(|&k| k != emp);
        s.current_job.endogenous.retain(|&k| k != emp);
        s
    }

    /// Edges `from → to` meaning `from`'s outcome is a regressor of `to`.
    pub fn recursion_edges(&self) -> Vec<(EquationKind, EquationKind)> {
        let mut edges = Vec::new();
        for (kind, eq) in self.equations() {
            for &src in &eq.endogenous {
                if !edges.contains(&(src, kind)) {
                    edges.push((src, kind));
                }
            }
            for col in eq.base_columns() {
                if let Some(src) = self.outcome_owner(col) {
                    if !edges.contains(&(src, kind)) {
                        edges.push((src, kind));
                    }
                }
            }
        }
        edges
    }

    /// Mode consistency, self-references and acyclicity of the recursion.
    pub fn check_structure(&self) -> Result<()> {
        match self.mode {
            ModelMode::Trivariate => {
                if self.employment.is_none() || self.outcomes.employment.is_none() {
                    return Err(Error::Spec(
                        "trivariate mode needs an employment equation and outcome".into(),
                    ));
                }
            }
            ModelMode::Bivariate => {
                if self.employment.is_some() {
                    return Err(Error::Spec("bivariate mode has no employment equation".into()));
                }
            }
        }
        let edges = self.recursion_edges();
        for &(from, to) in &edges {
            if from == to {
                return Err(Error::Spec(format!(
                    "equation {to} uses its own outcome `{}` as a regressor",
                    self.outcome(to).unwrap_or("?")
                )));
            }
            if self.outcome(from).is_none() {
                return Err(Error::Spec(format!("equation {to} references inactive equation {from}")));
            }
        }
        if let Some(cycle) = find_cycle(&edges) {
            let names: Vec<&str> = cycle.iter().map(|k| k.as_str()).collect();
            return Err(Error::Cycle(names.join(" -> ")));
        }
        for &(from, to) in &edges {
            let supported = from == EquationKind::FirstJob
                && matches!(to, EquationKind::Employment | EquationKind::CurrentJob);
            if !supported {
                return Err(Error::Spec(format!(
                    "unsupported recursion: outcome of {from} as a regressor in {to}"
                )));
            }
        }
        Ok(())
    }
}

fn find_cycle(edges: &[(EquationKind, EquationKind)]) -> Option<Vec<EquationKind>> {
    fn visit(
        node: EquationKind,
        edges: &[(EquationKind, EquationKind)],
        stack: &mut Vec<EquationKind>,
        done: &mut Vec<EquationKind>,
    ) -> Option<Vec<EquationKind>> {
        if let Some(pos) = stack.iter().position(|&n| n == node) {
            let mut cycle = stack[pos..].to_vec();
            cycle.push(node);
            return Some(cycle);
        }
        if done.contains(&node) {
            return None;
        }
        stack.push(node);
        for &(from, to) in edges {
            if from == node {
                if let Some(c) = visit(to, edges, stack, done) {
                    return Some(c);
                }
            }
        }
        stack.pop();
        done.push(node);
        None
    }
    let mut done = Vec::new();
    for &(from, _) in edges {
        let mut stack = Vec::new();
        if let Some(c) = visit(from, edges, &mut stack, &mut done) {
            return Some(c);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SPEC: &str = r#"
cluster = "occupation"

[outcomes]
first_job = "yf"
employment = "emp"
current_job = "yc"

[references]
field = "1"

[first_job]
terms = ["wave", "field", "search"]

[employment]
endogenous = ["first_job"]
terms = ["wave", "unemp"]

[current_job]
endogenous = ["first_job"]
terms = ["wave", "field", "yf:wave"]
"#;

    #[test]
    fn parses_and_orders_equations() {
        let s = ModelSpec::from_toml_str(SPEC).unwrap();
        let kinds: Vec<_> = s.equations().into_iter().map(|(k, _)| k).collect();
        assert_eq!(
            kinds,
            vec![EquationKind::FirstJob, EquationKind::Employment, EquationKind::CurrentJob]
        );
        assert_eq!(s.dim(), 3);
        assert_eq!(s.to_bivariate().dim(), 2);
        assert!(s.to_bivariate().check_structure().is_ok());
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = ModelSpec::from_toml_str(SPEC).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.first_job.terms.pop();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn current_outcome_in_first_job_is_a_cycle() {
        let text = SPEC.replace("terms = [\"wave\", \"field\", \"search\"]", "terms = [\"wave\", \"yc\"]");
        match ModelSpec::from_toml_str(&text) {
            Err(Error::Cycle(msg)) => assert!(msg.contains("first_job")),
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn own_outcome_is_rejected() {
        let text = SPEC.replace("\"yf:wave\"", "\"yc:wave\"");
        assert!(matches!(ModelSpec::from_toml_str(&text), Err(Error::Spec(_))));
    }

    #[test]
    fn toml_round_trip() {
        let s = ModelSpec::from_toml_str(SPEC).unwrap();
        let back = ModelSpec::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(s, back);
    }
}
