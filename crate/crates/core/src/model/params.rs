use serde::{Deserialize, Serialize};

use super::design::DesignMatrices;
use super::spec::EquationKind;
use crate::error::{Error, Result};
use crate::mvn::corr::{angle_count, angle_from_free, free_from_angle};
use crate::mvn::CorrelationParams;

/// Largest free correlation parameter magnitude; keeps every implied
/// correlation strictly inside (-1, 1) in floating point.
pub const FREE_BOUND: f64 = 18.0;

/// Labels of the error correlations, in angle order.
pub fn correlation_labels(dim: usize) -> Vec<String> {
    match dim {
        2 => vec!["corr(u_f, u_c)".into()],
        3 => vec!["corr(u_f, u_E)".into(), "corr(u_f, u_c)".into(), "corr(u_E, u_c)".into()],
        _ => (1..dim)
            .flat_map(|i| (0..i).map(move |j| format!("corr(u{i}, u{j})")))
            .collect(),
    }
}

/// Block boundaries of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub equations: Vec<(EquationKind, Vec<String>)>,
    pub dim: usize,
}

impl ParamLayout {
    pub fn from_design(design: &DesignMatrices) -> Self {
        Self {
            equations: design
                .equations()
                .into_iter()
                .map(|e| (e.layout.kind, e.layout.names()))
                .collect(),
            dim: design.dim(),
        }
    }

    pub fn n_coefficients(&self) -> usize {
        self.equations.iter().map(|(_, n)| n.len()).sum()
    }

    pub fn n_correlations(&self) -> usize {
        angle_count(self.dim)
    }

    pub fn len(&self) -> usize {
        self.n_coefficients() + self.n_correlations()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Start offset of each equation block.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.equations.len());
        let mut at = 0;
        for (_, names) in &self.equations {
            out.push(at);
            at += names.len();
        }
        out
    }

    pub fn block_range(&self, kind: EquationKind) -> Option<std::ops::Range<usize>> {
        let offsets = self.offsets();
        self.equations
            .iter()
            .zip(offsets)
            .find(|((k, _), _)| *k == kind)
            .map(|((_, n), o)| o..o + n.len())
    }

    pub fn correlation_range(&self) -> std::ops::Range<usize> {
        self.n_coefficients()..self.len()
    }

    /// Index of a coefficient by equation and design-column name.
    pub fn index_of(&self, kind: EquationKind, name: &str) -> Option<usize> {
        let range = self.block_range(kind)?;
        let (_, names) = self.equations.iter().find(|(k, _)| *k == kind)?;
        names.iter().position(|n| n == name).map(|p| range.start + p)
    }

    /// `equation:column` labels followed by free correlation labels.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .equations
            .iter()
            .flat_map(|(k, names)| names.iter().map(move |n| format!("{k}:{n}")))
            .collect();
        out.extend(correlation_labels(self.dim).into_iter().map(|l| format!("free {l}")));
        out
    }
}

/// Flat unconstrained parameter vector: coefficient blocks in equation order,
/// then one free parameter per correlation angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn zeros(layout: &ParamLayout) -> Self {
        Self(vec![0.0; layout.len()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBlocks {
    pub coefficients: Vec<Vec<f64>>,
    pub correlation_free: Vec<f64>,
}

impl ParamBlocks {
    pub fn unpack(v: &ParameterVector, layout: &ParamLayout) -> Result<Self> {
        if v.len() != layout.len() {
            return Err(Error::dimension("parameter vector", layout.len(), v.len()));
        }
        let mut at = 0;
        let mut coefficients = Vec::with_capacity(layout.equations.len());
        for (_, names) in &layout.equations {
            coefficients.push(v.0[at..at + names.len()].to_vec());
            at += names.len();
        }
        Ok(Self {
            coefficients,
            correlation_free: v.0[at..].to_vec(),
        })
    }

    pub fn pack(&self, layout: &ParamLayout) -> Result<ParameterVector> {
        if self.coefficients.len() != layout.equations.len() {
            return Err(Error::dimension(
                "coefficient blocks",
                layout.equations.len(),
                self.coefficients.len(),
            ));
        }
        let mut out = Vec::with_capacity(layout.len());
        for (block, (kind, names)) in self.coefficients.iter().zip(&layout.equations) {
            if block.len() != names.len() {
                return Err(Error::dimension(format!("{kind} block"), names.len(), block.len()));
            }
            out.extend_from_slice(block);
        }
        if self.correlation_free.len() != layout.n_correlations() {
            return Err(Error::dimension(
                "correlation parameters",
                layout.n_correlations(),
                self.correlation_free.len(),
            ));
        }
        out.extend_from_slice(&self.correlation_free);
        Ok(ParameterVector(out))
    }

    pub fn correlation(&self) -> Result<CorrelationParams> {
        let dim = (1..=8)
            .find(|&k| angle_count(k) == self.correlation_free.len())
            .ok_or_else(|| Error::Domain("invalid number of correlation parameters".into()))?;
        let angles = self
            .correlation_free
            .iter()
            .map(|&t| {
                if !t.is_finite() {
                    return Err(Error::NonFinite("correlation parameter".into()));
                }
                Ok(angle_from_free(t.clamp(-FREE_BOUND, FREE_BOUND)))
            })
            .collect::<Result<Vec<_>>>()?;
        CorrelationParams::new(dim, angles)
    }

    pub fn set_correlation(&mut self, corr: &CorrelationParams) {
        self.correlation_free = corr.angles().iter().map(|&a| free_from_angle(a)).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ParamLayout {
        ParamLayout {
            equations: vec![
                (EquationKind::FirstJob, vec!["(intercept)".into(), "x".into()]),
                (EquationKind::Employment, vec!["(intercept)".into()]),
                (EquationKind::CurrentJob, vec!["(intercept)".into(), "yf".into(), "z".into()]),
            ],
            dim: 3,
        }
    }

    #[test]
    fn zero_vector_unpacks_to_zero_blocks() {
        let l = layout();
        assert_eq!(l.len(), 9);
        let b = ParamBlocks::unpack(&ParameterVector::zeros(&l), &l).unwrap();
        assert!(b.coefficients.iter().flatten().all(|&v| v == 0.0));
        assert!(b.correlation().unwrap().correlations().iter().map(|r| r.abs()).fold(0.0, f64::max) < 1e-15);
    }

    #[test]
    fn short_vector_is_rejected() {
        let l = layout();
        assert!(ParamBlocks::unpack(&ParameterVector(vec![0.0; 8]), &l).is_err());
    }

    #[test]
    fn indices_and_labels() {
        let l = layout();
        assert_eq!(l.index_of(EquationKind::CurrentJob, "yf"), Some(4));
        assert_eq!(l.correlation_range(), 6..9);
        assert_eq!(l.labels()[4], "current_job:yf");
    }
}
