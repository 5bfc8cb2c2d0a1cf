use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, Dataset, Level};
use crate::error::{Error, Result};
use crate::model::design::{equation_layout, EquationLayout, Overrides};
use crate::model::spec::{EquationKind, ModelMode, ModelSpec};
use crate::model::{ParamBlocks, ParamLayout, ParameterVector};
use crate::mvn::corr::angle_count;
use crate::mvn::CorrelationParams;

/// How one covariate column is generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum CovariateGen {
    Bernoulli { p: f64 },
    /// Levels are coded `1..=k`.
    Categorical { labels: Vec<String>, probs: Vec<f64> },
    Normal { mean: f64, sd: f64 },
    /// Values recycled over the rows.
    Fixed { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(flatten)]
    pub generator: CovariateGen,
}

/// Cluster identifiers drawn uniformly from `1..=count`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub name: String,
    pub count: usize,
}

/// Data-generating process. Coefficients are keyed by equation name and
/// design-column name; absent entries are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub n: usize,
    pub seed: u64,
    pub model: ModelSpec,
    pub covariates: Vec<CovariateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterSpec>,
    pub coefficients: BTreeMap<String, BTreeMap<String, f64>>,
    /// Error correlations in the order (f,E), (f,c), (E,c); one value in the
    /// two-equation model.
    pub correlations: Vec<f64>,
}

const DESK_DGP: &str = include_str!("desk_dgp.toml");

impl DgpSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let dgp: DgpSpec = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<dgp>".into(),
            message: e.to_string(),
        })?;
        dgp.validate()?;
        Ok(dgp)
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
        toml::to_string_pretty(self).expect("dgp serializes")
    }

    /// Default scenario: a wave dummy, a five-level field, an
    /// unemployment-rate exclusion in the employment equation and
    /// first-job-only search covariates.
    pub fn desk_default() -> Self {
        Self::from_toml_str(DESK_DGP).expect("bundled dgp is valid")
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_correlations(mut self, correlations: Vec<f64>) -> Self {
        self.correlations = correlations;
        self
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn correlation_params(&self) -> Result<CorrelationParams> {
        let k = self.dim();
        if self.correlations.len() != angle_count(k) {
            return Err(Error::dimension("dgp correlations", angle_count(k), self.correlations.len()));
        }
        let mut m = DMatrix::identity(k, k);
        let mut idx = 0;
        for i in 1..k {
            for j in 0..i {
                m[(i, j)] = self.correlations[idx];
                m[(j, i)] = self.correlations[idx];
                idx += 1;
            }
        }
        CorrelationParams::from_correlation(&m)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.check_structure()?;
        if self.n == 0 {
            return Err(Error::Domain("dgp needs n >= 1".into()));
        }
        self.correlation_params()?;
        for c in &self.covariates {
            match &c.generator {
                CovariateGen::Bernoulli { p } if !(0.0..=1.0).contains(p) => {
                    return Err(Error::Domain(format!("`{}`: probability {p} outside [0,1]", c.name)));
                }
                CovariateGen::Categorical { labels, probs } => {
                    if labels.is_empty() || labels.len() != probs.len() {
                        return Err(Error::Domain(format!("`{}`: labels and probs differ in length", c.name)));
                    }
                    let s: f64 = probs.iter().sum();
                    if probs.iter().any(|p| *p < 0.0) || (s - 1.0).abs() > 1e-9 {
                        return Err(Error::Domain(format!("`{}`: probabilities must sum to 1", c.name)));
                    }
                }
                CovariateGen::Normal { sd, .. } if sd.is_nan() || *sd < 0.0 => {
                    return Err(Error::Domain(format!("`{}`: negative sd", c.name)));
                }
                CovariateGen::Fixed { values } if values.is_empty() => {
                    return Err(Error::Domain(format!("`{}`: no fixed values", c.name)));
                }
                _ => {}
            }
        }
        for eq in self.coefficients.keys() {
            if !["first_job", "employment", "current_job"].contains(&eq.as_str()) {
                return Err(Error::Spec(format!("unknown equation `{eq}` in dgp coefficients")));
            }
        }
        Ok(())
    }

    fn coefficient_vector(&self, layout: &EquationLayout) -> Result<Vec<f64>> {
        let empty = BTreeMap::new();
        let map = self.coefficients.get(layout.kind.as_str()).unwrap_or(&empty);
        for key in map.keys() {
            if layout.position(key).is_none() {
                return Err(Error::Spec(format!(
                    "dgp coefficient `{key}` is not a design column of {}",
                    layout.kind
                )));
            }
        }
        Ok(layout
            .columns
            .iter()
            .map(|c| map.get(&c.name).copied().unwrap_or(0.0))
            .collect())
    }

    /// True parameter vector in the estimation parametrization.
    pub fn true_parameters(&self, layout: &ParamLayout) -> Result<ParameterVector> {
        let empty = BTreeMap::new();
        let mut coefficients = Vec::new();
        for (kind, names) in &layout.equations {
            let map = self.coefficients.get(kind.as_str()).unwrap_or(&empty);
            coefficients.push(names.iter().map(|n| map.get(n).copied().unwrap_or(0.0)).collect());
        }
        let mut blocks = ParamBlocks {
            coefficients,
            correlation_free: Vec::new(),
        };
        blocks.set_correlation(&self.correlation_params()?);
        blocks.pack(layout)
    }
}

fn covariate_column(spec: &CovariateSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<Column> {
    let name = spec.name.clone();
    Ok(match &spec.generator {
        CovariateGen::Bernoulli { p } => {
            let d = Bernoulli::new(*p).map_err(|e| Error::Domain(e.to_string()))?;
            Column::new(name, ColumnKind::Binary, (0..n).map(|_| d.sample(rng) as u8 as f64).collect())
        }
        CovariateGen::Categorical { labels, probs } => {
            let d = WeightedIndex::new(probs).map_err(|e| Error::Domain(e.to_string()))?;
            let levels = labels
                .iter()
                .enumerate()
                .map(|(i, l)| Level {
                    code: (i + 1).to_string(),
                    label: l.clone(),
                })
                .collect();
            Column::new(
                name,
                ColumnKind::Categorical { levels },
                (0..n).map(|_| d.sample(rng) as f64).collect(),
            )
        }
        CovariateGen::Normal { mean, sd } => {
            let d = Normal::new(*mean, *sd).map_err(|e| Error::Domain(e.to_string()))?;
            Column::new(name, ColumnKind::Numeric, (0..n).map(|_| d.sample(rng)).collect())
        }
        CovariateGen::Fixed { values } => Column::new(
            name,
            ColumnKind::Numeric,
            (0..n).map(|i| values[i % values.len()]).collect(),
        ),
    })
}

fn index(layout: &EquationLayout, beta: &[f64], dataset: &Dataset, row: usize) -> Result<f64> {
    let x = layout
        .row_values(dataset, row, &Overrides::new())?
        .ok_or_else(|| Error::Row {
            row,
            message: format!("missing covariate in {}", layout.kind),
        })?;
    Ok(x.iter().zip(beta).map(|(a, b)| a * b).sum())
}

/// Simulated dataset.
pub fn simulate_dataset(dgp: &DgpSpec) -> Result<Dataset> {
    Ok(simulate_with_errors(dgp)?.0)
}

/// Simulated dataset and the latent errors of each row, in equation order.
pub fn simulate_with_errors(dgp: &DgpSpec) -> Result<(Dataset, Vec<Vec<f64>>)> {
    dgp.validate()?;
    let n = dgp.n;
    let k = dgp.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(dgp.seed);
    let mut data = Dataset::with_rows(n);
    for c in &dgp.covariates {
        data.push_column(covariate_column(c, n, &mut rng)?)?;
    }
    if let Some(cl) = &dgp.cluster {
        let ids = (0..n).map(|_| rng.random_range(1..=cl.count as u64) as f64).collect();
        data.push_column(Column::new(cl.name.clone(), ColumnKind::Numeric, ids))?;
    }
    let factor = dgp.correlation_params()?.factor();
    let l = factor.as_matrix();
    let errors: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            (0..k).map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum()).collect()
        })
        .collect();

    let spec = &dgp.model;
    let out_f = spec.outcomes.first_job.clone();
    let out_c = spec.outcomes.current_job.clone();
    let lf = equation_layout(&data, spec, EquationKind::FirstJob, &spec.first_job)?;
    let bf = dgp.coefficient_vector(&lf)?;
    let mut yf = Vec::with_capacity(n);
    for (r, u) in errors.iter().enumerate() {
        yf.push(if index(&lf, &bf, &data, r)? + u[0] >= 0.0 { 1.0 } else { 0.0 });
    }
    data.push_column(Column::new(out_f, ColumnKind::Binary, yf))?;

    let mut employed = vec![1.0; n];
    if spec.mode == ModelMode::Trivariate {
        let eq = spec.employment.as_ref().expect("checked structure");
        let le = equation_layout(&data, spec, EquationKind::Employment, eq)?;
        let be = dgp.coefficient_vector(&le)?;
        for (r, u) in errors.iter().enumerate() {
            employed[r] = if index(&le, &be, &data, r)? + u[1] >= 0.0 { 1.0 } else { 0.0 };
        }
        let name = spec.outcomes.employment.clone().expect("checked structure");
        data.push_column(Column::new(name, ColumnKind::Binary, employed.clone()))?;
    }
    // Placeholder so the current-job layout can resolve every column.
    data.push_column(Column::new(out_c.clone(), ColumnKind::Binary, vec![f64::NAN; n]))?;
    let lc = equation_layout(&data, spec, EquationKind::CurrentJob, &spec.current_job)?;
    let bc = dgp.coefficient_vector(&lc)?;
    let mut yc = vec![f64::NAN; n];
    for (r, u) in errors.iter().enumerate() {
        if employed[r] == 1.0 {
            yc[r] = if index(&lc, &bc, &data, r)? + u[k - 1] >= 0.0 { 1.0 } else { 0.0 };
        }
    }
    data.push_column(Column::new(out_c, ColumnKind::Binary, yc))?;
    data.provenance.push(format!("simulated: n={n}, seed={}", dgp.seed));
    Ok((data, errors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_default_is_valid_and_deterministic() {
        let dgp = DgpSpec::desk_default().with_n(500);
        let a = simulate_dataset(&dgp).unwrap();
        let b = simulate_dataset(&dgp).unwrap();
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        a.write_csv(&mut wa, "id", "").unwrap();
        b.write_csv(&mut wb, "id", "").unwrap();
        assert_eq!(wa, wb);
    }

    #[test]
    fn selection_rule_is_exact() {
        let dgp = DgpSpec::desk_default().with_n(2000);
        let d = simulate_dataset(&dgp).unwrap();
        let e = &d.column("employed").unwrap().values;
        let yc = &d.column("overeducated_current").unwrap().values;
        for (e, y) in e.iter().zip(yc) {
            assert_eq!(*e == 0.0, y.is_nan());
        }
    }

    #[test]
    fn unknown_coefficient_is_rejected() {
        let mut dgp = DgpSpec::desk_default().with_n(10);
        dgp.coefficients
            .get_mut("first_job")
            .unwrap()
            .insert("no_such_column".into(), 1.0);
        assert!(simulate_dataset(&dgp).is_err());
    }
}
