//! Classification of fractured-bone fragments by break agent.
//!
//! The pipeline: load fragment meshes and annotated break curves, measure
//! geometric features at break and fragment level, assemble feature tables,
//! and evaluate classifiers under fragment-grouped, leakage-safe protocols.
//! Companion modules provide spectral clustering for unsupervised structure
//! and a synthetic audit that demonstrates how grouped data leaks under naive
//! evaluation.

pub mod breaks;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod learners;
pub mod mesh;
pub mod rng;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
