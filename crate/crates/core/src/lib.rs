//! Streaming estimation of point probabilities over tree-structured Bayesian
//! networks with high-cardinality variables.
//!
//! The graphical-model sketches hash each factor of the network (one table per
//! variable, one per variable-parent pair) into `m` bins, so their space does
//! not depend on the variable cardinalities. A whole-vector count-min sketch
//! and a dense exact estimator are provided for comparison.

pub mod error;
pub mod harness;
pub mod hashing;
pub mod model;
pub mod sketches;
pub mod synth;
pub mod table;

pub use error::{Error, Result};
pub use hashing::{derive_seed, pair_key, HashFn, HashTuple};
pub use model::{ExactEstimator, ModelFile, Observation, TreeModel};
pub use sketches::{
    CmSketch, EstimatorKind, GmFactorSketch, GmHash, GmSketch, PointEstimator, Sketch, SketchConfig,
};
