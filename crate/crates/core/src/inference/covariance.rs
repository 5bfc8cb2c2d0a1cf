use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DesignMatrices;
use crate::mvn::GhkConfig;
use crate::sml::LikelihoodProblem;

/// Per-row score matrix (rows × parameters) by central differences.
pub fn numerical_score(design: &DesignMatrices, params: &[f64], config: &GhkConfig) -> Result<DMatrix<f64>> {
    let problem = LikelihoodProblem::new(design, config)?;
    Ok(problem.score_matrix(params)?.2)
}

/// Hessian of the simulated log-likelihood by central differences of the
/// score, symmetrized.
pub fn numerical_hessian(design: &DesignMatrices, params: &[f64], config: &GhkConfig) -> Result<DMatrix<f64>> {
    LikelihoodProblem::new(design, config)?.hessian(params)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    Opg,
    Hessian,
    Robust,
    Clustered,
}

impl std::str::FromStr for CovarianceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "opg" => Ok(Self::Opg),
            "hessian" => Ok(Self::Hessian),
            "robust" => Ok(Self::Robust),
            "clustered" | "cluster" => Ok(Self::Clustered),
            other => Err(Error::Domain(format!("unknown covariance type `{other}`"))),
        }
    }
}

/// Covariance estimates of the free parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSet {
    #[serde(with = "crate::matrix_serde")]
    pub opg: DMatrix<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub hessian: DMatrix<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub robust: DMatrix<f64>,
    #[serde(with = "crate::matrix_serde::option", default)]
    pub clustered: Option<DMatrix<f64>>,
    pub n_clusters: Option<usize>,
    /// `G/(G−1)`, applied to the clustered estimate only.
    pub small_sample_factor: Option<f64>,
}

impl CovarianceSet {
    pub fn get(&self, kind: CovarianceKind) -> Option<&DMatrix<f64>> {
        match kind {
            CovarianceKind::Opg => Some(&self.opg),
            CovarianceKind::Hessian => Some(&self.hessian),
            CovarianceKind::Robust => Some(&self.robust),
            CovarianceKind::Clustered => self.clustered.as_ref(),
        }
    }

    /// Clustered when available, otherwise Hessian-based.
    pub fn preferred(&self) -> (CovarianceKind, &DMatrix<f64>) {
        match &self.clustered {
            Some(c) => (CovarianceKind::Clustered, c),
            None => (CovarianceKind::Hessian, &self.hessian),
        }
    }

    pub fn standard_errors(&self, kind: CovarianceKind) -> Option<Vec<f64>> {
        self.get(kind)
            .map(|m| m.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect())
    }
}

/// Inverse of a symmetric matrix via SVD; near-singular input is an error
/// reporting the condition number.
pub fn invert_symmetric(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{context} has non-finite entries")));
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition.is_nan() || condition >= 1e13 {
        return Err(Error::Singular {
            context: context.to_string(),
            condition,
        });
    }
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V");
    let inv_s = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s));
    let inv = vt.transpose() * inv_s * u.transpose();
    Ok((&inv + inv.transpose()) * 0.5)
}

fn bread_meat(h_inv: &DMatrix<f64>, meat: &DMatrix<f64>) -> DMatrix<f64> {
    let v = h_inv * meat * h_inv;
    (&v + v.transpose()) * 0.5
}

/// `H⁻¹ (Σ sᵢ sᵢᵀ) H⁻¹` without small-sample correction.
pub fn robust_sandwich(scores: &DMatrix<f64>, hessian: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shapes(scores, hessian)?;
    let h_inv = invert_symmetric(hessian, "Hessian")?;
    Ok(bread_meat(&h_inv, &(scores.transpose() * scores)))
}

/// Cluster sums of score rows, in order of first appearance.
fn cluster_sums(scores: &DMatrix<f64>, clusters: &[u64]) -> DMatrix<f64> {
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut order = Vec::with_capacity(clusters.len());
    for &c in clusters {
        let next = index.len();
        order.push(*index.entry(c).or_insert(next));
    }
    let mut sums = DMatrix::zeros(index.len(), scores.ncols());
    for (i, &g) in order.iter().enumerate() {
        for j in 0..scores.ncols() {
            sums[(g, j)] += scores[(i, j)];
        }
    }
    sums
}

fn check_shapes(scores: &DMatrix<f64>, hessian: &DMatrix<f64>) -> Result<()> {
    if hessian.nrows() != hessian.ncols() {
        return Err(Error::dimension("Hessian columns", hessian.nrows(), hessian.ncols()));
    }
    if scores.ncols() != hessian.nrows() {
        return Err(Error::dimension("score columns", hessian.nrows(), scores.ncols()));
    }
    Ok(())
}

/// Cluster-robust sandwich `H⁻¹ (Σ_g s_g s_gᵀ) H⁻¹ · G/(G−1)` and the
/// cluster count.
pub fn clustered_sandwich(
    scores: &DMatrix<f64>,
    hessian: &DMatrix<f64>,
    clusters: &[u64],
) -> Result<(DMatrix<f64>, usize)> {
    check_shapes(scores, hessian)?;
    if clusters.len() != scores.nrows() {
        return Err(Error::dimension("cluster ids", scores.nrows(), clusters.len()));
    }
    let sums = cluster_sums(scores, clusters);
    let g = sums.nrows();
    if g < 2 {
        return Err(Error::Domain(format!("clustered covariance needs at least 2 clusters, found {g}")));
    }
    let h_inv = invert_symmetric(hessian, "Hessian")?;
    let v = bread_meat(&h_inv, &(sums.transpose() * &sums)) * (g as f64 / (g as f64 - 1.0));
    Ok((v, g))
}

/// OPG, Hessian, robust and (with cluster ids) clustered covariances.
pub fn compute_covariances(
    scores: &DMatrix<f64>,
    hessian: &DMatrix<f64>,
    clusters: Option<&[u64]>,
) -> Result<CovarianceSet> {
    check_shapes(scores, hessian)?;
    let opg = invert_symmetric(&(scores.transpose() * scores), "outer product of scores")?;
    let neg_h = -hessian;
    let hess = invert_symmetric(&neg_h, "Hessian")?;
    let robust = bread_meat(&hess, &(scores.transpose() * scores));
    let (clustered, n_clusters, factor) = match clusters {
        Some(ids) => {
            let (v, g) = clustered_sandwich(scores, hessian, ids)?;
            (Some(v), Some(g), Some(g as f64 / (g as f64 - 1.0)))
        }
        None => (None, None, None),
    };
    Ok(CovarianceSet {
        opg,
        hessian: hess,
        robust,
        clustered,
        n_clusters,
        small_sample_factor: factor,
    })
}
