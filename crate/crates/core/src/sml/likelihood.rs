use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::kernel::{self, Local, RowKind, LOCAL};
use crate::error::{Error, Result};
use crate::model::spec::EquationKind;
use crate::model::{DesignMatrices, ParamLayout};
use crate::mvn::draws::DrawGenerator;
use crate::mvn::{DrawMatrix, GhkConfig};

// Fixed chunking keeps matrix reductions independent of the thread count.
const CHUNK: usize = 512;

const LOCAL_NAMES: [&str; LOCAL] = ["first_job index", "employment index", "current_job index", "t10", "t20", "t21"];

/// Simulated log-likelihood of a design under fixed draws.
pub struct LikelihoodProblem<'a> {
    design: &'a DesignMatrices,
    layout: ParamLayout,
    kinds: Vec<RowKind>,
    draws: Vec<Option<DrawMatrix>>,
    config: GhkConfig,
}

impl<'a> LikelihoodProblem<'a> {
    pub fn new(design: &'a DesignMatrices, config: &GhkConfig) -> Result<Self> {
        config.validate()?;
        let trivariate = design.dim() == 3;
        let kinds: Vec<RowKind> = (0..design.n_obs())
            .map(|i| {
                let y_f = design.y_f[i] == 1.0;
                if !trivariate {
                    RowKind::Pair {
                        y_f,
                        y_c: design.y_c[i] == 1.0,
                    }
                } else if design.selected(i) {
                    RowKind::Selected {
                        y_f,
                        y_c: design.y_c[i] == 1.0,
                    }
                } else {
                    RowKind::Unselected { y_f }
                }
            })
            .collect();
        let generator = DrawGenerator::new(config, 2);
        let draws = kinds
            .par_iter()
            .zip(design.row_ids.par_iter())
            .map(|(k, &id)| match k {
                RowKind::Selected { .. } => Some(generator.block(id)),
                _ => None,
            })
            .collect();
        Ok(Self {
            design,
            layout: ParamLayout::from_design(design),
            kinds,
            draws,
            config: config.clone(),
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn design(&self) -> &DesignMatrices {
        self.design
    }

    pub fn config(&self) -> &GhkConfig {
        &self.config
    }

    pub fn n_obs(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[RowKind] {
        &self.kinds
    }

    fn slot_kind(&self, slot: usize) -> Option<EquationKind> {
        match slot {
            0 => Some(EquationKind::FirstJob),
            1 if self.design.dim() == 3 => Some(EquationKind::Employment),
            2 => Some(EquationKind::CurrentJob),
            _ => None,
        }
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.layout.len() {
            return Err(Error::dimension("parameter vector", self.layout.len(), theta.len()));
        }
        if let Some(j) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter `{}`", self.layout.labels()[j])));
        }
        Ok(())
    }

    /// Local parameter vector of every row.
    pub fn local_params(&self, theta: &[f64]) -> Result<Vec<Local>> {
        self.check(theta)?;
        let n = self.n_obs();
        let mut out = vec![[0.0; LOCAL]; n];
        for slot in 0..3 {
            let Some(kind) = self.slot_kind(slot) else { continue };
            let eq = self.design.equation(kind).expect("active equation");
            let range = self.layout.block_range(kind).expect("layout block");
            let beta = DVector::from_column_slice(&theta[range]);
            let index = &eq.matrix * beta;
            for (row, v) in out.iter_mut().zip(index.iter()) {
                row[slot] = *v;
            }
        }
        let corr = &theta[self.layout.correlation_range()];
        for row in out.iter_mut() {
            row[3..3 + corr.len()].copy_from_slice(corr);
        }
        Ok(out)
    }

    /// Total log-likelihood and per-row contributions.
    pub fn loglik(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let local = self.local_params(theta)?;
        let contributions: Vec<f64> = (0..self.n_obs())
            .into_par_iter()
            .with_min_len(64)
            .map(|i| kernel::loglik(self.kinds[i], &local[i], self.draws[i].as_ref()))
            .collect();
        Ok((contributions.iter().sum(), contributions))
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.loglik(theta)?.0)
    }

    /// Per-row local scores.
    pub fn local_scores(&self, theta: &[f64]) -> Result<(f64, Vec<Local>)> {
        let local = self.local_params(theta)?;
        let results: Vec<(f64, Local)> = (0..self.n_obs())
            .into_par_iter()
            .with_min_len(16)
            .map(|i| kernel::score(self.kinds[i], &local[i], self.draws[i].as_ref()))
            .collect();
        let mut total = 0.0;
        let mut scores = Vec::with_capacity(results.len());
        for (i, (ll, g)) in results.into_iter().enumerate() {
            if let Some(k) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite score for the {} at row {}",
                    LOCAL_NAMES[k], self.design.rows[i]
                )));
            }
            total += ll;
            scores.push(g);
        }
        Ok((total, scores))
    }

    /// Log-likelihood and its gradient.
    pub fn gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (ll, scores) = self.local_scores(theta)?;
        Ok((ll, self.chain_sum(&scores)))
    }

    /// Gradient and the per-row score matrix (rows × parameters).
    pub fn score_matrix(&self, theta: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
        let (ll, scores) = self.local_scores(theta)?;
        let p = self.layout.len();
        let mut s = DMatrix::zeros(self.n_obs(), p);
        for slot in 0..3 {
            let Some(kind) = self.slot_kind(slot) else { continue };
            let x = &self.design.equation(kind).expect("active equation").matrix;
            let range = self.layout.block_range(kind).expect("layout block");
            for (j, col) in range.enumerate() {
                for i in 0..self.n_obs() {
                    s[(i, col)] = scores[i][slot] * x[(i, j)];
                }
            }
        }
        let corr = self.layout.correlation_range();
        for (j, col) in corr.enumerate() {
            for i in 0..self.n_obs() {
                s[(i, col)] = scores[i][3 + j];
            }
        }
        Ok((ll, self.chain_sum(&scores), s))
    }

    fn chain_sum(&self, scores: &[Local]) -> Vec<f64> {
        let mut grad = vec![0.0; self.layout.len()];
        for slot in 0..3 {
            let Some(kind) = self.slot_kind(slot) else { continue };
            let x = &self.design.equation(kind).expect("active equation").matrix;
            let range = self.layout.block_range(kind).expect("layout block");
            let g = DVector::from_iterator(scores.len(), scores.iter().map(|s| s[slot]));
            let block = x.tr_mul(&g);
            grad[range].copy_from_slice(block.as_slice());
        }
        let corr = self.layout.correlation_range();
        for (j, col) in corr.enumerate() {
            grad[col] = scores.iter().map(|s| s[3 + j]).sum();
        }
        grad
    }

    /// Hessian of the log-likelihood: local central-difference Hessians
    /// mapped through the linear indices.
    pub fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let local = self.local_params(theta)?;
        let p = self.layout.len();
        let ranges: Vec<Option<std::ops::Range<usize>>> = (0..3)
            .map(|s| self.slot_kind(s).and_then(|k| self.layout.block_range(k)))
            .collect();
        let xs: Vec<Option<&DMatrix<f64>>> = (0..3)
            .map(|s| self.slot_kind(s).map(|k| &self.design.equation(k).expect("active").matrix))
            .collect();
        let corr_start = self.layout.correlation_range().start;
        let n_corr = self.layout.n_correlations();
        let n = self.n_obs();
        let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
        let partials: Vec<Result<DMatrix<f64>>> = starts
            .par_iter()
            .map(|&start| {
                let mut h = DMatrix::zeros(p, p);
                let mut jac: Vec<Vec<(usize, f64)>> = vec![Vec::new(); LOCAL];
                for i in start..(start + CHUNK).min(n) {
                    let kind = self.kinds[i];
                    let hi = kernel::hessian(kind, &local[i], self.draws[i].as_ref());
                    for (slot, entries) in jac.iter_mut().enumerate() {
                        entries.clear();
                        if slot < 3 {
                            if let (Some(r), Some(x)) = (&ranges[slot], xs[slot]) {
                                entries.extend(r.clone().enumerate().map(|(j, c)| (c, x[(i, j)])));
                            }
                        } else if slot - 3 < n_corr {
                            entries.push((corr_start + slot - 3, 1.0));
                        }
                    }
                    let active = kind.active();
                    for &a in active {
                        for &b in active {
                            let w = hi[a][b];
                            if !w.is_finite() {
                                return Err(Error::Numerical(format!(
                                    "non-finite Hessian entry at row {}",
                                    self.design.rows[i]
                                )));
                            }
                            if w == 0.0 {
                                continue;
                            }
                            for &(ra, va) in &jac[a] {
                                if va == 0.0 {
                                    continue;
                                }
                                let wa = w * va;
                                for &(rb, vb) in &jac[b] {
                                    h[(ra, rb)] += wa * vb;
                                }
                            }
                        }
                    }
                }
                Ok(h)
            })
            .collect();
        let mut total = DMatrix::zeros(p, p);
        for part in partials {
            total += part?;
        }
        let sym = (&total + total.transpose()) * 0.5;
        Ok(sym)
    }
}
