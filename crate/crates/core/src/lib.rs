//! Graph-regularized few-shot learners over class-label graphs.
//!
//! The crate is organized around a pipeline:
//!
//! 1. [`graph`]: load or synthesize a label graph whose leaves are classes.
//! 2. [`walks`]: biased second-order random walks and co-occurrence
//!    neighborhoods over that graph.
//! 3. [`reg`]: the skip-gram style graph loss, its gradients, and standalone
//!    node embedding.
//! 4. [`learners`]: prototype, cosine fine-tuning, and inner-loop classifiers
//!    fit with the graph loss as a regularizer.
//! 5. [`tasks`] and [`metrics`]: episode generation (synthetic tree or
//!    feature files), task hardness, and result aggregation.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below pin the common double-precision instantiations.

pub mod error;
pub mod graph;
pub mod learners;
pub mod metrics;
pub mod param;
pub mod reg;
pub mod scalar;
pub mod seed;
pub mod tasks;
pub mod walks;

pub use error::{Error, Result};
pub use graph::{load_edge_list, load_edge_list_with_classes, LabelGraph, NodeId};
pub use scalar::Scalar;

/// Double-precision parameter table, the default throughout the CLI.
pub type ParamTable64 = param::ParamTable<f64>;
/// Single-precision parameter table.
pub type ParamTable32 = param::ParamTable<f32>;
/// Double-precision classifier.
pub type Classifier64 = learners::Classifier<f64>;
/// Double-precision episode.
pub type Episode64 = tasks::Episode<f64>;
