//! Subsampled regression forests with infinitesimal jackknife variance
//! estimates, exact enumeration oracles, and a simulation harness.
//!
//! The main entry points are [`forest::train`] for fitting,
//! [`jackknife::forest_estimate`] for a prediction with its variance, and
//! [`jackknife::interval`] for a normal-theory interval around it.

// `!(x > 0.0)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod experiments;
pub mod forest;
pub mod jackknife;
pub mod numeric;
pub mod oracle;
pub mod persist;
pub mod rng;
pub mod sampling;
pub mod stats;
pub mod tree;

pub use dataset::{LabeledExample, SyntheticKind, SyntheticSpec, TrainingSet};
pub use error::{Error, Result};
pub use forest::{ForestConfig, ForestModel, TreeOutputs};
pub use jackknife::{PredictionInterval, VarianceEstimate};
pub use tree::{TreeConfig, TreeMode, TreeModel};
