//! Causal network motifs: treatment-labeled ego-network motif features and
//! honest, positivity-constrained exposure trees for network experiments.
//!
//! The pipeline runs [`graph`] → [`assignment`] → [`motifs`] → [`exposure`]
//! → [`tree`] / [`estimators`]; [`simlab`] wires it end-to-end on synthetic
//! Watts-Strogatz experiments.

pub mod assignment;
pub mod error;
pub mod estimators;
pub mod exposure;
pub mod graph;
pub mod motifs;
pub mod simlab;
pub mod tree;

pub use error::{Error, Result};
