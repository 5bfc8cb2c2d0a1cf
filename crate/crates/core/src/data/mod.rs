//! Data ingestion and description: codebook-driven CSV loading, derived
//! binary indicators, sample filters, descriptive statistics and result
//! serialization.

pub mod codebook;
pub mod dataset;
pub mod describe;
pub mod filters;
pub mod serialize;

pub use codebook::{Codebook, ColumnSpec, DerivedRule};
pub use dataset::{Column, ColumnKind, Dataset, Level};
pub use describe::{describe, render_describe, DescribeRow};
pub use filters::{apply_filters, DropRule, FilterLog, FilterSpec};
pub use serialize::{serialize_result, CoefficientEntry, CorrelationEntry, ResultDocument};

use std::path::Path;

use crate::error::{Error, Result};

/// Reads and encodes a CSV according to `codebook`.
pub fn load_csv(path: &Path, codebook: &Codebook) -> Result<Dataset> {
    codebook.load_csv(path)
}

/// Adds the codebook's derived binary indicators.
pub fn derive_binaries(dataset: &Dataset, codebook: &Codebook) -> Result<Dataset> {
    codebook.derive_binaries(dataset)
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
