//! Multi-task ordinal regression toolkit.
//!
//! Ordinal labels (disease stages, survey grades) carry an order that plain
//! classification ignores. This crate trains threshold models that score an
//! instance on a latent line and read the label off a set of ordered cut
//! points, jointly over several related tasks (subpopulation groups sharing a
//! feature space):
//!
//! - [`optimizer::train_rmtor`] — regularized shallow models with a shared
//!   ℓ2,1 row-sparsity penalty, trained by alternating FISTA steps on the
//!   weight matrix and gradient descent on the thresholds. Both the
//!   immediate-threshold and all-threshold losses are supported.
//! - [`deep::train_dmtor`] — a feed-forward network with shared
//!   representation layers and task-specific heads, trained by mini-batch SGD
//!   on the same ordinal losses.
//! - [`baselines`] — single-task counterparts in the global (pooled) and
//!   individual (per-task) settings.
//! - [`eval`] — the latent-variable prediction rule, accuracy/MAE reports,
//!   stratified splitting, and k-fold selection of the sparsity parameter.
//! - [`data`] — CSV ingestion keyed by a task column, and a synthetic
//!   generator that inverts the latent-variable model.
//!
//! Labels are 1-based integers `1..=U` everywhere on the public surface.
//! Training is deterministic per seed.

pub mod baselines;
pub mod data;
pub mod dataset;
pub mod deep;
pub mod eval;
pub mod loss;
pub mod model;
pub mod optimizer;

mod serde_arrays;

pub use dataset::{DatasetError, MultiTaskDataset, Task};
pub use model::{RmtorModel, ThresholdSet, ThresholdVariant, WeightMatrix};
