use serde::{Deserialize, Serialize};

use super::dataset::{ColumnKind, Dataset};
use crate::error::Result;

/// Mean, standard deviation (n−1 denominator) and count of non-missing
/// values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescribeRow {
    pub name: String,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub n: usize,
}

fn summarize(name: String, values: impl Iterator<Item = f64>) -> DescribeRow {
    let xs: Vec<f64> = values.filter(|v| !v.is_nan()).collect();
    let n = xs.len();
    if n == 0 {
        return DescribeRow {
            name,
            mean: None,
            sd: None,
            n,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        Some((ss / (n - 1) as f64).sqrt())
    } else {
        None
    };
    DescribeRow {
        name,
        mean: Some(mean),
        sd,
        n,
    }
}

/// Descriptive statistics per column; categorical columns produce one row
/// per level (the level share).
pub fn describe(dataset: &Dataset, columns: &[String]) -> Result<Vec<DescribeRow>> {
    let mut rows = Vec::new();
    for name in columns {
        let col = dataset.column(name)?;
        match &col.kind {
            ColumnKind::Categorical { levels } => {
                for (i, level) in levels.iter().enumerate() {
                    let ind = col.values.iter().map(|&v| {
                        if v.is_nan() {
                            f64::NAN
                        } else if v as usize == i {
                            1.0
                        } else {
                            0.0
                        }
                    });
                    rows.push(summarize(format!("{name}: {}", level.label), ind));
                }
            }
            _ => rows.push(summarize(name.clone(), col.values.iter().copied())),
        }
    }
    Ok(rows)
}

/// Text table in the `name  mean  sd` layout with three decimals.
pub fn render_describe(rows: &[DescribeRow]) -> String {
    let width = rows.iter().map(|r| r.name.chars().count()).max().unwrap_or(4).max(8);
    let mut out = format!("{:<width$}  {:>6}  {:>6}  {:>8}\n", "Variable", "Mean", "SD", "N");
    for r in rows {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
        out.push_str(&format!(
            "{:<width$}  {:>6}  {:>6}  {:>8}\n",
            r.name,
            fmt(r.mean),
            fmt(r.sd),
            r.n
        ));
    }
    out
}

/// Mean and sd cell as printed in descriptive tables: `0.284  0.451`.
pub fn format_mean_sd(mean: f64, sd: f64) -> String {
    format!("{mean:.3}  {sd:.3}")
}
