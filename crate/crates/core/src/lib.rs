//! Structure-guided neighborhood discovery and adaptive multi-graph GNNs for
//! node classification on heterophilic graphs.
//!
//! The pipeline: load a [`dataset::Dataset`], compute structural
//! [`features`], build [`knn`] graphs from them, score each graph with
//! [`homophily`] metrics, and train the [`models`] with [`train`].
//! [`harness`] wires these into the experiments exposed by the `sggnn`
//! binary.

pub mod autodiff;
pub mod dataset;
pub mod dense;
pub mod error;
pub mod features;
pub mod graph;
pub mod harness;
pub mod homophily;
pub mod knn;
pub mod models;
pub mod train;

pub use error::{Error, Result};
