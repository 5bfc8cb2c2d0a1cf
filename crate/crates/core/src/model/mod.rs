//! Declarative model description, design-matrix construction and parameter
//! packing.

pub mod design;
pub mod params;
pub mod spec;
pub mod validate;

pub use design::{build_design, DesignColumn, DesignMatrices, EquationDesign, EquationLayout, Factor, Overrides};
pub use params::{ParamBlocks, ParamLayout, ParameterVector};
pub use spec::{EquationKind, EquationSpec, ModelMode, ModelSpec, Outcomes};
pub use validate::{validate_spec, SpecReport};
