//! Experiment runner for transformed snapshot interpolation: two-shock and
//! shock/rarefaction Burgers studies, a snapshot-budget rate study, and the
//! separation-of-variables barrier demonstration.

pub mod config;
pub mod csv;
pub mod experiments;

pub use config::{ExperimentConfig, ExperimentKind, Quadrature};
pub use csv::ResultsRow;
pub use experiments::{run, RunOutput};
