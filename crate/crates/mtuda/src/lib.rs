//! Multi-task-learning-based unsupervised domain adaptation (mtUDA).
//!
//! Jointly learns a source classifier and a target classifier in an RKHS,
//! coupled by a classifier-similarity term, regularized by the target-domain
//! graph Laplacian, and aligned by an MMD penalty on marginal and per-class
//! conditional output statistics. Target pseudo labels are initialized by a
//! source 1-NN and refined over a fixed number of iterations.

pub mod config;
pub mod data;
pub mod error;
pub mod graph;
pub mod kernel;
pub mod mmd;
pub mod oracle;
pub mod pipeline;
pub mod solver;

pub use error::{Error, Result};
