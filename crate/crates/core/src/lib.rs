//! Transformed snapshot interpolation (TSI) for parametric functions with
//! parameter-dependent jumps: spatial transforms that align the jumps,
//! hp-adaptive refinement of the parameter interval, a component-wise
//! extension to two parameter dimensions, and an exact Burgers front-tracking
//! oracle for snapshot generation and verification.

pub mod burgers;
pub mod error;
pub mod field;
pub mod fit;
pub mod hp;
pub mod interp;
pub mod tensor;
pub mod transform;
pub mod tsi;

pub use error::{Result, TsiError};
pub use field::{Grid1D, SampledField};
pub use fit::{FitConfig, FitReport, QuadratureMode, SnapshotProvider};
pub use hp::{adapt, AdaptConfig, Partition};
pub use interp::{chebyshev_nodes, equispaced_nodes, NodeKind, NodeSet};
pub use tensor::{evaluate_componentwise, fit_componentwise, ComponentModel, TensorConfig};
pub use transform::TransformSet;
pub use tsi::TsiCellModel;
