//! The merge-split move: join two districts along their link, draw a fresh
//! multi-scale tree on the union, cut it in two and relabel.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use super::cut::{find_cut_set, CutOptions, CutSet, SplitTarget, DEFAULT_EXHAUSTIVE_DEGREE};
use crate::error::ProposalError;
use crate::graph::{EdgeId, Hierarchy, VertexId};
use crate::measure::{
    allowable_from_crossing, pair_required, soft_score, LinkScheme, MeasureParams,
};
use crate::state::{check_link_set, ordered, Partition, PlanState};
use crate::tree::{
    count_hierarchical_trees, sample_piece, sample_top, MultiScaleTree, TreeCountCache,
};

/// Why a proposal was discarded before the accept/reject coin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AbortReason {
    /// The fresh merged tree has no admissible cut.
    EmptyCutSet,
    /// The old link cannot be cut from the old merged tree, so the move is
    /// not reversible.
    Irreversible,
    /// Some pair would share two nodes on one level.
    PairShare,
    /// A required pair would have no allowable link.
    Unlinkable,
    /// Kept links no longer form a valid link set.
    InvalidLinks,
}

/// What happened to one proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Accepted,
    Rejected,
    Aborted(AbortReason),
}

/// Bookkeeping for a merge-split proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeSplitRecord {
    pub pair: (usize, usize),
    pub outcome: Outcome,
    /// `ln` of the acceptance ratio; −∞ for aborted proposals.
    pub log_accept: f64,
    pub old_cut_set: usize,
    pub new_cut_set: usize,
    /// Incremental `ln τ(old) − ln τ(new)` over the merged pair, when computed.
    pub log_tau_ratio: Option<f64>,
}

/// Settings of the merge-split kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeSplitConfig {
    pub exhaustive_degree: usize,
    /// Compute the tree-count ratio even when γ = 0.
    pub always_tau_ratio: bool,
}

impl Default for MergeSplitConfig {
    fn default() -> Self {
        MergeSplitConfig {
            exhaustive_degree: DEFAULT_EXHAUSTIVE_DEGREE,
            always_tau_ratio: false,
        }
    }
}

/// Links that may be picked for merging.
pub fn eligible_links(h: &Hierarchy, state: &PlanState, params: &MeasureParams) -> Vec<EdgeId> {
    eligible_in(h, &state.partition, &state.links, params).collect()
}

fn eligible_in<'a>(
    h: &'a Hierarchy,
    p: &'a Partition,
    links: &'a BTreeSet<EdgeId>,
    params: &'a MeasureParams,
) -> impl Iterator<Item = EdgeId> + 'a {
    links.iter().copied().filter(move |&e| {
        if !params.restrict_merge_to_split_pairs {
            return true;
        }
        let (x, y) = h.base().edge(e);
        p.shared_nodes(p.district_of(x), p.district_of(y)).is_some()
    })
}

/// Picks a link uniformly among the eligible ones; returns it with its log
/// probability.
pub fn pick_link<G: Rng + ?Sized>(
    h: &Hierarchy,
    state: &PlanState,
    params: &MeasureParams,
    rng: &mut G,
) -> Result<(EdgeId, f64), ProposalError> {
    let eligible = eligible_links(h, state, params);
    let &e = eligible.choose(rng).ok_or(ProposalError::NoLinks)?;
    Ok((e, -(eligible.len() as f64).ln()))
}

/// Allowable link edges of every required pair involving `a` or `b`.
pub fn pair_link_options(
    h: &Hierarchy,
    p: &Partition,
    params: &MeasureParams,
    a: usize,
    b: usize,
) -> BTreeMap<(usize, usize), Vec<EdgeId>> {
    let mut crossing: BTreeMap<(usize, usize), BTreeSet<EdgeId>> = BTreeMap::new();
    for d in [a, b] {
        for x in p.district_vertices(d) {
            for &(y, e) in h.base().neighbors(x) {
                let other = p.district_of(y);
                if other != d {
                    crossing.entry(ordered(d, other)).or_default().insert(e);
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for (pair, edges) in crossing {
        if pair_required(p, pair, true, params) {
            let edges: Vec<EdgeId> = edges.into_iter().collect();
            out.insert(pair, allowable_from_crossing(h, p, pair, &edges));
        }
    }
    if params.link_scheme == LinkScheme::FixedCountStrict {
        for (&pair, _) in p.sharing_pairs() {
            if pair.0 == a || pair.0 == b || pair.1 == a || pair.1 == b {
                out.entry(pair).or_insert_with(Vec::new);
            }
        }
    }
    out
}

fn log_link_parts(options: &BTreeMap<(usize, usize), Vec<EdgeId>>) -> f64 {
    options.values().map(|v| (v.len() as f64).ln()).sum()
}

/// The part of `ln τ_ℋ(a) + ln τ_ℋ(b)` that can change when `a ∪ b` is
/// re-split: the two top quotients plus, for every node the pair shares,
/// the excess of the two separate interiors over the joint one.
pub fn pair_tau_terms(
    h: &Hierarchy,
    p: &Partition,
    a: usize,
    b: usize,
    cache: &mut TreeCountCache,
) -> Result<f64, ProposalError> {
    let (ra, rb) = (p.region(h, a), p.region(h, b));
    let mut total = cache.log_top(h, &ra)? + cache.log_top(h, &rb)?;
    if let Some(shared) = p.shared_nodes(a, b) {
        let joint = p.pair_region(h, a, b);
        for &key in shared {
            total += cache.log_node(h, key, &ra)? + cache.log_node(h, key, &rb)?
                - cache.log_node(h, key, &joint)?;
        }
    }
    Ok(total)
}

/// `ln τ_ℋ(a) + ln τ_ℋ(b)` counted from scratch.
pub fn pair_log_tau_full(
    h: &Hierarchy,
    p: &Partition,
    a: usize,
    b: usize,
) -> Result<f64, ProposalError> {
    Ok(count_hierarchical_trees(h, &p.region(h, a))?.log_value
        + count_hierarchical_trees(h, &p.region(h, b))?.log_value)
}

/// Whether cutting `e` out of the merged tree of `a ∪ b` keeps the node
/// rules: every node split by the cut must hold no third district, and the
/// split top-node budget must hold.
struct CutRules<'a> {
    h: &'a Hierarchy,
    p: &'a Partition,
    pair: (usize, usize),
    base_split: usize,
    max_split: Option<usize>,
}

impl<'a> CutRules<'a> {
    fn new(
        h: &'a Hierarchy,
        p: &'a Partition,
        params: &MeasureParams,
        pair: (usize, usize),
    ) -> Self {
        let top = h.levels();
        let split = if top == 0 {
            0
        } else {
            p.split_nodes(top).len()
        };
        let pair_split = top > 0 && p.shared_nodes(pair.0, pair.1).is_some();
        CutRules {
            h,
            p,
            pair,
            base_split: split - usize::from(pair_split),
            max_split: params.max_split_top_nodes,
        }
    }

    fn allows(&self, e: EdgeId) -> bool {
        let top = self.h.levels();
        let k = self.h.crossing_level(e);
        if k == top {
            return self.max_split.is_none_or(|m| self.base_split <= m);
        }
        let (x, _) = self.h.base().edge(e);
        for n in k + 1..=top {
            let v = self.h.ancestor(n, x);
            if self
                .p
                .occupants(n, v)
                .iter()
                .any(|o| o.district != self.pair.0 && o.district != self.pair.1)
            {
                return false;
            }
        }
        self.max_split.is_none_or(|m| self.base_split < m)
    }
}

fn cut_options(params: &MeasureParams, config: &MergeSplitConfig) -> CutOptions {
    CutOptions {
        exhaustive_degree: config.exhaustive_degree,
        allow_top_edges: !params.cuts_inside_top_nodes(),
        allow_inner_edges: params.max_districts_per_top_node > 1,
    }
}

/// Joins the trees of `a` and `b` through `link` into a tree of the union,
/// drawing any piece of a shared node that is still unresolved.
fn merged_tree<G: Rng + ?Sized>(
    h: &Hierarchy,
    state: &mut PlanState,
    (a, b): (usize, usize),
    link: EdgeId,
    rng: &mut G,
) -> Result<MultiScaleTree, ProposalError> {
    let shared: Vec<_> = state
        .partition
        .shared_nodes(a, b)
        .map(|s| s.iter().copied().collect())
        .unwrap_or_default();
    for &key in &shared {
        for d in [a, b] {
            if !state.forest[d].is_resolved(key) {
                let piece = sample_piece(h, key, &state.partition.region(h, d), rng)?;
                state.forest[d].pieces.insert(key, piece);
            }
        }
    }
    let mut merged = MultiScaleTree::default();
    for d in [a, b] {
        merged.top.extend_from_slice(&state.forest[d].top);
        for (&key, piece) in &state.forest[d].pieces {
            if state.partition.touches(key.0, key.1, d) {
                merged
                    .pieces
                    .entry(key)
                    .or_default()
                    .extend_from_slice(piece);
            }
        }
    }
    match h.edge_home(link) {
        Some(home) => merged.pieces.entry(home).or_default().push(link),
        None => merged.top.push(link),
    }
    merged.top.sort_unstable();
    for piece in merged.pieces.values_mut() {
        piece.sort_unstable();
    }
    Ok(merged)
}

/// Splits the cut merged tree between the districts now holding each side.
fn split_tree(
    h: &Hierarchy,
    p: &Partition,
    merged: MultiScaleTree,
    cut: EdgeId,
    labels: (usize, usize),
) -> [MultiScaleTree; 2] {
    let mut out = [MultiScaleTree::default(), MultiScaleTree::default()];
    let slot = |d: usize| usize::from(d == labels.1);
    for e in merged.top {
        if e != cut {
            out[slot(p.district_of(h.base().edge(e).0))].top.push(e);
        }
    }
    for (key, piece) in merged.pieces {
        let in_first = p.touches(key.0, key.1, labels.0);
        let in_second = p.touches(key.0, key.1, labels.1);
        if in_first && in_second {
            let (mut first, mut second) = (Vec::new(), Vec::new());
            for e in piece {
                if e == cut {
                    continue;
                }
                if p.district_of(h.base().edge(e).0) == labels.0 {
                    first.push(e);
                } else {
                    second.push(e);
                }
            }
            out[0].pieces.insert(key, first);
            out[1].pieces.insert(key, second);
        } else if in_first {
            out[0].pieces.insert(key, piece);
        } else if in_second {
            out[1].pieces.insert(key, piece);
        }
    }
    out
}

/// Whether any pair involving `a` or `b` shares two nodes on one level.
fn pair_share_violation(p: &Partition, a: usize, b: usize) -> bool {
    p.sharing_pairs().any(|(&(x, y), nodes)| {
        if x != a && x != b && y != a && y != b {
            return false;
        }
        let mut levels = BTreeSet::new();
        nodes.iter().any(|&(n, _)| !levels.insert(n))
    })
}

fn soft_total(h: &Hierarchy, p: &Partition, params: &MeasureParams) -> f64 {
    soft_score(h, p, params).iter().map(|t| t.1).sum()
}

fn aborted(pair: (usize, usize), reason: AbortReason, old: usize, new: usize) -> MergeSplitRecord {
    MergeSplitRecord {
        pair,
        outcome: Outcome::Aborted(reason),
        log_accept: f64::NEG_INFINITY,
        old_cut_set: old,
        new_cut_set: new,
        log_tau_ratio: None,
    }
}

/// Moves back every vertex whose label changed.
fn undo(h: &Hierarchy, p: &mut Partition, moves: &[(VertexId, usize, usize)]) {
    let back: Vec<(VertexId, usize)> = moves.iter().map(|&(x, from, _)| (x, from)).collect();
    p.reassign(h, &back);
}

/// One merge-split proposal followed by the Metropolis-Hastings decision.
/// Pieces revealed from the current trees are kept even on rejection.
pub fn merge_split_step<G: Rng + ?Sized>(
    h: &Hierarchy,
    state: &mut PlanState,
    params: &MeasureParams,
    config: &MergeSplitConfig,
    cache: &mut TreeCountCache,
    rng: &mut G,
) -> Result<MergeSplitRecord, ProposalError> {
    let (link, log_pick_fwd) = pick_link(h, state, params, rng)?;
    let pair = state.link_pair(h, link);
    let (a, b) = pair;
    let target = SplitTarget::symmetric(params.bounds(h.base().total_population()));
    let options = cut_options(params, config);

    // the reverse move would cut `link` out of the current merged tree
    let mut old_merged = merged_tree(h, state, pair, link, rng)?;
    let old_cuts = {
        let rules = CutRules::new(h, &state.partition, params, pair);
        let region = state.partition.pair_region(h, a, b);
        find_cut_set(
            h,
            &region,
            &mut old_merged,
            &target,
            &options,
            &mut |e| rules.allows(e),
            rng,
        )?
    };
    for &key in &old_cuts.expanded {
        let owner = if state.partition.touches(key.0, key.1, a) {
            a
        } else {
            b
        };
        state.forest[owner]
            .pieces
            .insert(key, old_merged.pieces[&key].clone());
    }
    if !old_cuts.contains(link) {
        return Ok(aborted(pair, AbortReason::Irreversible, old_cuts.len(), 0));
    }

    let (fresh, new_cuts, sides) = {
        let rules = CutRules::new(h, &state.partition, params, pair);
        let region = state.partition.pair_region(h, a, b);
        let mut fresh = MultiScaleTree {
            top: sample_top(h, &region, rng)?,
            pieces: BTreeMap::new(),
        };
        let cuts: CutSet = find_cut_set(
            h,
            &region,
            &mut fresh,
            &target,
            &options,
            &mut |e| rules.allows(e),
            rng,
        )?;
        if cuts.is_empty() {
            return Ok(aborted(pair, AbortReason::EmptyCutSet, old_cuts.len(), 0));
        }
        let chosen = cuts.candidates[rng.gen_range(0..cuts.len())].edge;
        let sides = cuts.sides(h, &region, chosen);
        (fresh, cuts, (chosen, sides))
    };
    let (cut, (first_side, second_side)) = sides;
    let (first_label, second_label) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };

    let want_tau = params.gamma != 0.0 || config.always_tau_ratio;
    let tau_old = if want_tau {
        Some(pair_tau_terms(h, &state.partition, a, b, cache)?)
    } else {
        None
    };
    let soft_old = soft_total(h, &state.partition, params);
    let spanning = params.allow_spanning_links;
    let old_options = if spanning {
        BTreeMap::new()
    } else {
        pair_link_options(h, &state.partition, params, a, b)
    };
    let old_pair_links: Vec<EdgeId> = if spanning {
        Vec::new()
    } else {
        state
            .links
            .iter()
            .copied()
            .filter(|&e| {
                let (x, y) = state.link_pair(h, e);
                x == a || x == b || y == a || y == b
            })
            .collect()
    };

    let mut moves = Vec::new();
    for (side, label) in [(&first_side, first_label), (&second_side, second_label)] {
        for &x in side {
            let from = state.partition.district_of(x);
            if from != label {
                moves.push((x, from, label));
            }
        }
    }
    let forward: Vec<(VertexId, usize)> = moves.iter().map(|&(x, _, to)| (x, to)).collect();
    state.partition.reassign(h, &forward);

    if pair_share_violation(&state.partition, a, b) {
        undo(h, &mut state.partition, &moves);
        return Ok(aborted(
            pair,
            AbortReason::PairShare,
            old_cuts.len(),
            new_cuts.len(),
        ));
    }

    let mut new_links = state.links.clone();
    let (mut log_links_fwd, mut log_links_bwd) = (0.0, 0.0);
    let new_options = if spanning {
        new_links.remove(&link);
        new_links.insert(cut);
        if check_link_set(h, &state.partition, &new_links, params).is_err() {
            undo(h, &mut state.partition, &moves);
            return Ok(aborted(
                pair,
                AbortReason::InvalidLinks,
                old_cuts.len(),
                new_cuts.len(),
            ));
        }
        BTreeMap::new()
    } else {
        let options = pair_link_options(h, &state.partition, params, a, b);
        if options.values().any(|v| v.is_empty()) {
            undo(h, &mut state.partition, &moves);
            return Ok(aborted(
                pair,
                AbortReason::Unlinkable,
                old_cuts.len(),
                new_cuts.len(),
            ));
        }
        for e in &old_pair_links {
            new_links.remove(e);
        }
        new_links.insert(cut);
        for (&p, edges) in &options {
            if p != pair {
                new_links.insert(*edges.choose(rng).expect("nonempty"));
                log_links_fwd -= (edges.len() as f64).ln();
            }
        }
        for (&p, edges) in &old_options {
            if p != pair {
                log_links_bwd -= (edges.len() as f64).ln();
            }
        }
        options
    };

    let soft_new = soft_total(h, &state.partition, params);
    let tau_new = if want_tau {
        Some(pair_tau_terms(h, &state.partition, a, b, cache)?)
    } else {
        None
    };
    let log_tau_ratio = tau_old.zip(tau_new).map(|(o, n)| o - n);

    let eligible_back = eligible_in(h, &state.partition, &new_links, params).count();
    let log_q_fwd = log_pick_fwd - (new_cuts.len() as f64).ln() + log_links_fwd;
    let log_q_bwd = -(eligible_back as f64).ln() - (old_cuts.len() as f64).ln() + log_links_bwd;
    let mut log_target = if params.beta == 0.0 {
        0.0
    } else {
        -params.beta * (soft_new - soft_old)
    };
    if params.gamma != 0.0 {
        let ratio = log_tau_ratio.expect("computed when gamma is nonzero");
        log_target +=
            params.gamma * (ratio + log_link_parts(&old_options) - log_link_parts(&new_options));
    }
    let log_accept = log_target + log_q_bwd - log_q_fwd;

    let accept = log_accept >= 0.0 || rng.gen::<f64>().ln() < log_accept;
    let record = |outcome| MergeSplitRecord {
        pair,
        outcome,
        log_accept,
        old_cut_set: old_cuts.len(),
        new_cut_set: new_cuts.len(),
        log_tau_ratio,
    };
    if !accept {
        undo(h, &mut state.partition, &moves);
        return Ok(record(Outcome::Rejected));
    }
    let [first_tree, second_tree] =
        split_tree(h, &state.partition, fresh, cut, (first_label, second_label));
    state.forest[first_label] = first_tree;
    state.forest[second_label] = second_tree;
    state.links = new_links;
    Ok(record(Outcome::Accepted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::Hierarchy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_by_six() -> (Hierarchy, PlanState, MeasureParams) {
        let h = fixtures::grid_with_blocks(2, 6, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // left four columns against the right two, linked across columns 3-4
        let assignment: Vec<usize> = (0..12).map(|x| usize::from(x % 6 >= 3)).collect();
        let link = h
            .base()
            .edges()
            .iter()
            .position(|&(x, y)| (x, y) == (2, 3))
            .unwrap();
        let state = PlanState::new(&h, assignment, 2, BTreeSet::from([link]), &mut rng).unwrap();
        (
            h,
            state,
            MeasureParams {
                num_districts: 2,
                ..MeasureParams::default()
            },
        )
    }

    #[test]
    fn thirteen_links_give_one_in_thirteen() {
        let h = Hierarchy::flat(fixtures::path_graph(14));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let links: BTreeSet<EdgeId> = (0..13).collect();
        let state = PlanState::new(&h, (0..14).collect(), 14, links, &mut rng).unwrap();
        let params = MeasureParams {
            num_districts: 14,
            ..MeasureParams::default()
        };
        let (_, lp) = pick_link(&h, &state, &params, &mut rng).unwrap();
        assert!((lp - (1.0f64 / 13.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn restricted_picking_ignores_unshared_pairs() {
        // 2x4 grid with 2x1 blocks, one block split between two districts
        let h = fixtures::grid_with_blocks(2, 4, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let assignment = vec![0, 1, 2, 2, 0, 1, 1, 2];
        let edge = |a, b| h.base().edges().iter().position(|&e| e == (a, b)).unwrap();
        let links = BTreeSet::from([edge(0, 1), edge(1, 2), edge(5, 6), edge(6, 7)]);
        let state = PlanState {
            links,
            ..PlanState::new(&h, assignment, 3, BTreeSet::new(), &mut rng).unwrap()
        };
        let params = MeasureParams {
            num_districts: 3,
            restrict_merge_to_split_pairs: true,
            ..MeasureParams::default()
        };
        // only the pair sharing column 2 (districts 1 and 2 via 6-2 block) is eligible
        let eligible = eligible_links(&h, &state, &params);
        assert!(eligible.iter().all(|&e| {
            let (a, b) = state.link_pair(&h, e);
            state.partition.shared_nodes(a, b).is_some()
        }));
        assert!(eligible.len() < state.links.len());
    }

    #[test]
    fn steps_keep_the_state_valid() {
        let (h, mut state, params) = two_by_six();
        state.validate(&h, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cache = TreeCountCache::new();
        let mut accepted = 0;
        for _ in 0..400 {
            let rec = merge_split_step(
                &h,
                &mut state,
                &params,
                &MergeSplitConfig::default(),
                &mut cache,
                &mut rng,
            )
            .unwrap();
            accepted += usize::from(rec.outcome == Outcome::Accepted);
            state.validate(&h, &params).unwrap();
        }
        assert!(accepted > 0);
    }

    #[test]
    fn gamma_one_steps_keep_the_state_valid() {
        let h = fixtures::nested_grid(4, 4, &[(2, 2)]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let assignment: Vec<usize> = (0..16)
            .map(|x| (x % 4) / 2 + 2 * usize::from(x / 4 >= 2))
            .collect();
        let params = MeasureParams {
            num_districts: 4,
            gamma: 1.0,
            ..MeasureParams::default()
        };
        let mut links = BTreeSet::new();
        for (e, &(x, y)) in h.base().edges().iter().enumerate() {
            let (a, b) = ordered(assignment[x], assignment[y]);
            if a != b
                && !links.iter().any(|&f: &EdgeId| {
                    let (u, v) = h.base().edge(f);
                    ordered(assignment[u], assignment[v]) == (a, b)
                })
            {
                links.insert(e);
            }
        }
        let mut state = PlanState::new(&h, assignment, 4, links, &mut rng).unwrap();
        state.validate(&h, &params).unwrap();
        let mut cache = TreeCountCache::new();
        let config = MergeSplitConfig {
            always_tau_ratio: true,
            ..MergeSplitConfig::default()
        };
        for _ in 0..300 {
            let before = state.partition.clone();
            let rec =
                merge_split_step(&h, &mut state, &params, &config, &mut cache, &mut rng).unwrap();
            state.validate(&h, &params).unwrap();
            if rec.outcome == Outcome::Accepted {
                let (a, b) = rec.pair;
                let full = pair_log_tau_full(&h, &before, a, b).unwrap()
                    - pair_log_tau_full(&h, &state.partition, a, b).unwrap();
                assert!((full - rec.log_tau_ratio.unwrap()).abs() < 1e-9);
            }
        }
    }
}
