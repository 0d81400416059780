//! Multi-scale merge-split Markov chain Monte Carlo over graph partitions.
//!
//! A state is a forest of hierarchical spanning trees (one per district)
//! together with a set of linking edges. The sampler merges two linked
//! districts, draws a fresh hierarchical tree over their union and cuts it
//! back into two population-feasible districts.

pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod io;
pub mod measure;
pub mod oracle;
pub mod proposal;
pub mod state;
pub mod tree;

pub use error::{ConfigError, GraphError, StateError, TreeError};
pub use graph::{
    BaseGraph, EdgeId, Hierarchy, MaskRegion, Multigraph, NodeKey, Region, SubgraphRef, VertexId,
};
