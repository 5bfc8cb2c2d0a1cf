use serde::{Deserialize, Serialize};

use super::kernel::{self, RowKind, LOCAL};
use crate::error::{Error, Result};
use crate::model::ParamBlocks;
use crate::mvn::DrawMatrix;

/// One row of the system: outcomes and the design row of each equation.
/// `employed` is `None` for the two-equation model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y_f: bool,
    pub employed: Option<bool>,
    pub y_c: Option<bool>,
    pub x_f: Vec<f64>,
    pub x_e: Vec<f64>,
    pub x_c: Vec<f64>,
}

impl Observation {
    pub(crate) fn kind(&self) -> Result<RowKind> {
        match (self.employed, self.y_c) {
            (Some(true), Some(y_c)) => Ok(RowKind::Selected { y_f: self.y_f, y_c }),
            (Some(true), None) => Err(Error::Domain("current-job outcome missing for an employed row".into())),
            (Some(false), None) => Ok(RowKind::Unselected { y_f: self.y_f }),
            (Some(false), Some(_)) => Err(Error::Domain(
                "current-job outcome observed for a row that is not employed".into(),
            )),
            (None, Some(y_c)) => Ok(RowKind::Pair { y_f: self.y_f, y_c }),
            (None, None) => Err(Error::Domain("current-job outcome missing in the two-equation model".into())),
        }
    }
}

fn dot(x: &[f64], b: &[f64], what: &str) -> Result<f64> {
    if x.len() != b.len() {
        return Err(Error::dimension(what, b.len(), x.len()));
    }
    Ok(x.iter().zip(b).map(|(a, b)| a * b).sum())
}

/// Probability of the observed outcome pattern. Employed rows use the GHK
/// simulator over `(y_f, E, y_c)`; the other branches are exact.
pub fn obs_probability(obs: &Observation, params: &ParamBlocks, draws: &DrawMatrix) -> Result<f64> {
    let kind = obs.kind()?;
    let blocks = &params.coefficients;
    let mut p = [0.0; LOCAL];
    match kind {
        RowKind::Pair { .. } => {
            if blocks.len() != 2 || params.correlation_free.len() != 1 {
                return Err(Error::Domain("two-equation row needs two coefficient blocks".into()));
            }
            p[0] = dot(&obs.x_f, &blocks[0], "first_job design row")?;
            p[2] = dot(&obs.x_c, &blocks[1], "current_job design row")?;
            p[3] = params.correlation_free[0];
        }
        _ => {
            if blocks.len() != 3 || params.correlation_free.len() != 3 {
                return Err(Error::Domain("three-equation row needs three coefficient blocks".into()));
            }
            p[0] = dot(&obs.x_f, &blocks[0], "first_job design row")?;
            p[1] = dot(&obs.x_e, &blocks[1], "employment design row")?;
            if matches!(kind, RowKind::Selected { .. }) {
                p[2] = dot(&obs.x_c, &blocks[2], "current_job design row")?;
                if draws.dims() != 2 {
                    return Err(Error::dimension("GHK draw dimensions", 2, draws.dims()));
                }
            }
            p[3..].copy_from_slice(&params.correlation_free);
        }
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear index".into()));
    }
    Ok(kernel::loglik(kind, &p, Some(draws)).exp())
}
