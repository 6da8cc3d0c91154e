//! Hierarchical sparse dictionaries (HSD) for compact landmark encoding,
//! and a landmark-based visual place recognition pipeline built on top.
//!
//! The encoder alternates topological sparse layers with max pooling:
//!
//! ```text
//! patch ──S1 (matching pursuit + SOM layout)──► C1 (max pool)
//!       ──S2 (matching pursuit + SOM layout)──► C2 (max pool) ──► descriptor
//! ```
//!
//! Descriptors feed a place memory that merges landmark identity with its
//! absolute azimuth, recruits place cells under a vigilance threshold and
//! answers localization queries. The [`evaluation`] module runs the
//! learning / recording / test protocol and computes precision-recall AUC.
//!
//! Runnable walkthroughs for each stage live in `crates/core/examples/`.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod format;
pub mod hierarchy;
pub mod linalg;
pub mod preprocessing;
pub mod sparse_layer;
pub mod topology;
pub mod vpr;

pub mod cli;

pub use error::{Error, Result};
pub use hierarchy::{Descriptor, HsdNetwork, NetworkShape, TrainConfig};
pub use preprocessing::{GrayImage, Patch, PointOfInterest};
pub use sparse_layer::{Dictionary, HomeostasisState, SparseCode, SparseLearnConfig};
pub use topology::{SomConfig, SomGrid};
