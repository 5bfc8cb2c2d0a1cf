//! Benchmark fixtures shared by the criterion targets.

use triprobit::model::{build_design, DesignMatrices};
use triprobit::montecarlo::{simulate_dataset, DgpSpec};
use triprobit::Result;

/// Design of a desk-default simulated sample with `n` rows.
pub fn desk_design(n: usize) -> Result<(DgpSpec, DesignMatrices)> {
    let dgp = DgpSpec::desk_default().with_n(n);
    let data = simulate_dataset(&dgp)?;
    let design = build_design(&data, &dgp.model)?;
    Ok((dgp, design))
}
