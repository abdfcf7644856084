//! Hierarchical multi-label persuasion-technique classification over
//! precomputed feature vectors.
//!
//! The crate covers the taxonomy DAG, Poincaré-ball label embeddings trained
//! with entailment cones, three classifier heads (hyperbolic distance-weighted,
//! class-definition multi-task, and a binary detector), union ensembling and
//! hierarchical evaluation.

pub mod binary;
pub mod cdp;
pub mod cones;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod hyperbolic;
pub mod hypemo;
pub mod metrics;
mod modelio;
pub mod nn;
pub mod synthetic;
pub mod taxonomy;
mod vecmath;

pub use error::{Error, Result};
