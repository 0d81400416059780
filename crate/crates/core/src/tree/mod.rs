//! Spanning-tree algebra on multigraphs and hierarchies.

pub mod count;
pub mod hierarchical;
pub mod wilson;

pub use count::{count_spanning_trees, count_spanning_trees_with, log_spanning_trees, TreeCount};
pub use hierarchical::{
    count_hierarchical_trees, count_hierarchical_trees_with, has_hierarchical_tree,
    sample_hierarchical_tree, sample_piece, sample_top, MultiScaleTree, Resolve, TreeCountCache,
};
pub use wilson::{wilson_edges, wilson_sample, SpanningTree};
