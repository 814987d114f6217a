//! Glass-box / black-box ensembles with explainability guarantees.
//!
//! A glass-box model `g` and a black-box model `b` are fitted on tabular
//! data. Each observation is labelled by whether each model's prediction is
//! *sufficient* (correct class, or loss below a threshold), and observations
//! are ranked by how desirable it is to route them to the glass box. The
//! top-`q` fraction of that ranking is a provably optimal allocation at
//! explainability level `q`. A gradient-boosted allocator learns to estimate
//! the ranking from features available at prediction time, and the
//! [`metrics`] module scores the resulting explainability/performance curve.
//!
//! Module map:
//!
//! - [`dataset`]: CSV ingestion, seeded splits, `[-1, 1]` scaling, and a
//!   synthetic two-class task with complementary regions.
//! - [`models`]: linear/logistic regression (proximal gradient), CART trees,
//!   gradient-boosted trees and k-fold grid search.
//! - [`sufficiency`]: underlying losses, the regression threshold and the
//!   four-way sufficiency partition.
//! - [`allocation`]: desirability scores and ranks, top-`q` allocation,
//!   oracle / random / learned / distance-based allocators and their
//!   per-`q` ensembling.
//! - [`metrics`]: performance curves and the scalar summary metrics.
//! - [`experiment`]: configuration, the end-to-end pipeline, replication and
//!   ablations.
//! - [`verify`]: exhaustive checks of the allocation optimality properties.

pub mod allocation;
pub mod dataset;
mod error;
pub mod experiment;
pub mod metrics;
pub mod models;
pub mod sufficiency;
pub mod verify;

pub use error::{Error, Result};

/// Probability floor applied before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;
