//! Proposal kernels and the search machinery they share.

pub mod cut;
pub mod hierarchy_move;
pub mod merge_split;
pub mod view;

pub use cut::{
    cut_probability, find_cut_set, should_expand, CutCandidate, CutOptions, CutSet, SplitTarget,
};
pub use hierarchy_move::{
    candidate_pairs, hierarchy_move, regroup, BlockBounds, HierarchyAbort, HierarchyOutcome,
    HierarchyRecord,
};
pub use merge_split::{
    eligible_links, merge_split_step, pair_link_options, pair_log_tau_full, pair_tau_terms,
    pick_link, AbortReason, MergeSplitConfig, MergeSplitRecord, Outcome,
};
pub use view::{atom_of, AtomTree, Rooted};
