//! Evolving the hierarchy itself on fixed districts: two sibling nodes
//! inside one district trade children by re-cutting a tree over their union.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{ConfigError, ProposalError};
use crate::graph::{EdgeId, Hierarchy, Multigraph};
use crate::measure::MeasureParams;
use crate::state::{Partition, PlanState};
use crate::tree::{log_spanning_trees, sample_piece, wilson_edges, TreeCountCache};

/// Allowed number of children per coarse node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockBounds {
    pub min: usize,
    pub max: usize,
}

impl BlockBounds {
    pub fn new(min: usize, max: usize) -> Result<Self, ConfigError> {
        if min == 0 || min > max {
            return Err(ConfigError::BlockBounds { min, max });
        }
        Ok(BlockBounds { min, max })
    }

    pub fn contains(&self, size: usize) -> bool {
        self.min <= size && size <= self.max
    }

    /// Whether every coarse node of the hierarchy has an allowed child count.
    pub fn admits(&self, h: &Hierarchy) -> bool {
        (1..=h.levels()).all(|n| (0..h.size(n)).all(|v| self.contains(h.children(n, v).len())))
    }
}

/// Why a hierarchy move was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HierarchyAbort {
    /// The hierarchy has no coarse levels.
    Flat,
    /// No sibling pair sits unsplit inside one district.
    NoPair,
    /// The chosen pair is not joined by the district's tree.
    NotTreeAdjacent,
    /// The fresh tree has no cut with allowed child counts.
    EmptyCutSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HierarchyOutcome {
    Accepted,
    Rejected,
    Aborted(HierarchyAbort),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyRecord {
    pub level: usize,
    pub pair: Option<(usize, usize)>,
    pub outcome: HierarchyOutcome,
    pub log_accept: f64,
}

impl HierarchyRecord {
    fn aborted(level: usize, pair: Option<(usize, usize)>, reason: HierarchyAbort) -> Self {
        HierarchyRecord {
            level,
            pair,
            outcome: HierarchyOutcome::Aborted(reason),
            log_accept: f64::NEG_INFINITY,
        }
    }
}

/// Sibling pairs at `level` that are adjacent, unsplit and in one district.
pub fn candidate_pairs(h: &Hierarchy, p: &Partition, level: usize) -> Vec<(usize, usize)> {
    let top = h.levels();
    let owner = |v: usize| match p.occupants(level, v) {
        [only] => Some(only.district),
        _ => None,
    };
    h.weights(level)
        .keys()
        .copied()
        .filter(|&(u, v)| {
            (level == top || h.parent(level, u) == h.parent(level, v))
                && owner(u).is_some()
                && owner(u) == owner(v)
        })
        .collect()
}

/// Tree edges (local indices) whose removal leaves two parts with allowed
/// child counts.
fn count_cuts(g: &Multigraph, tree: &[usize], bounds: BlockBounds) -> Vec<usize> {
    let n = g.num_vertices();
    let mut adj = vec![Vec::new(); n];
    for &t in tree {
        let (a, b, _) = g.edges[t];
        adj[a].push((b, t));
        adj[b].push((a, t));
    }
    let mut parent = vec![usize::MAX; n];
    let mut via = vec![usize::MAX; n];
    let mut order = vec![0];
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut i = 0;
    while i < order.len() {
        let u = order[i];
        i += 1;
        for &(v, t) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                parent[v] = u;
                via[v] = t;
                order.push(v);
            }
        }
    }
    let mut size = vec![1usize; n];
    for &u in order.iter().rev() {
        if parent[u] != usize::MAX {
            size[parent[u]] += size[u];
        }
    }
    let mut out: Vec<usize> = (0..n)
        .filter(|&u| {
            parent[u] != usize::MAX && bounds.contains(size[u]) && bounds.contains(n - size[u])
        })
        .map(|u| via[u])
        .collect();
    out.sort_unstable();
    out
}

/// Local vertices on the side of `cut` holding its first endpoint.
fn side_of(g: &Multigraph, tree: &[usize], cut: usize) -> Vec<bool> {
    let n = g.num_vertices();
    let mut adj = vec![Vec::new(); n];
    for &t in tree {
        if t != cut {
            let (a, b, _) = g.edges[t];
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut side = vec![false; n];
    let start = g.edges[cut].0;
    side[start] = true;
    let mut stack = vec![start];
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !side[v] {
                side[v] = true;
                stack.push(v);
            }
        }
    }
    side
}

/// Rebuilds the hierarchy with some level-(l−1) nodes moved to new
/// level-l parents, keeping clockwise orders of the other levels.
pub fn regroup(
    h: &Hierarchy,
    level: usize,
    moves: &[(usize, usize)],
) -> Result<Hierarchy, ProposalError> {
    let mut maps = h.partition_maps().to_vec();
    for &(child, node) in moves {
        maps[level - 1][child] = node;
    }
    let mut next = Hierarchy::build(h.base().clone(), &maps)
        .map_err(|e| ProposalError::Hierarchy(e.to_string()))?;
    for n in 1..=h.levels() {
        if n != level {
            if let Some(lists) = h.oriented(n) {
                next = next
                    .with_oriented_level(n, lists.to_vec())
                    .map_err(|e| ProposalError::Hierarchy(e.to_string()))?;
            }
        }
    }
    Ok(next)
}

/// `ln τ` of the three interiors a hierarchy move changes for district `d`:
/// the two nodes and their parent (or the district's top quotient).
fn three_node_log_tau(
    h: &Hierarchy,
    p: &Partition,
    d: usize,
    level: usize,
    pair: (usize, usize),
) -> Result<f64, ProposalError> {
    let region = p.region(h, d);
    let mut total = log_spanning_trees(&h.region_piece(level, pair.0, &region))?
        + log_spanning_trees(&h.region_piece(level, pair.1, &region))?;
    total += if level == h.levels() {
        log_spanning_trees(&h.region_top(&region))?
    } else {
        log_spanning_trees(&h.region_piece(level + 1, h.parent(level, pair.0), &region))?
    };
    Ok(total)
}

/// One hierarchy proposal with its Metropolis-Hastings decision. On
/// acceptance the new hierarchy is returned and the state (partition caches
/// and district tree) already refers to it; the count cache is cleared.
pub fn hierarchy_move<G: Rng + ?Sized>(
    h: &Hierarchy,
    state: &mut PlanState,
    params: &MeasureParams,
    bounds: BlockBounds,
    cache: &mut TreeCountCache,
    rng: &mut G,
) -> Result<(HierarchyRecord, Option<Hierarchy>), ProposalError> {
    let top = h.levels();
    if top == 0 {
        return Ok((
            HierarchyRecord::aborted(0, None, HierarchyAbort::Flat),
            None,
        ));
    }
    let level = rng.gen_range(1..=top);
    let pairs = candidate_pairs(h, &state.partition, level);
    if pairs.is_empty() {
        return Ok((
            HierarchyRecord::aborted(level, None, HierarchyAbort::NoPair),
            None,
        ));
    }
    let (u, v) = pairs[rng.gen_range(0..pairs.len())];
    let district = state.partition.occupants(level, u)[0].district;

    // the tree edge joining u and v lives in the parent's piece or on top
    let parent_key = (level < top).then(|| (level + 1, h.parent(level, u)));
    if let Some(key) = parent_key {
        if !state.forest[district].is_resolved(key) {
            let piece = sample_piece(h, key, &state.partition.region(h, district), rng)?;
            state.forest[district].pieces.insert(key, piece);
        }
    }
    let joins = |e: &EdgeId| {
        let (x, y) = h.base().edge(*e);
        let (a, b) = (h.ancestor(level, x), h.ancestor(level, y));
        (a, b) == (u, v) || (a, b) == (v, u)
    };
    let linking = match parent_key {
        Some(key) => state.forest[district].pieces[&key]
            .iter()
            .copied()
            .find(joins),
        None => state.forest[district].top.iter().copied().find(joins),
    };
    let Some(old_edge) = linking else {
        return Ok((
            HierarchyRecord::aborted(level, Some((u, v)), HierarchyAbort::NotTreeAdjacent),
            None,
        ));
    };
    for node in [u, v] {
        let key = (level, node);
        if !state.forest[district].is_resolved(key) {
            let piece = sample_piece(h, key, &state.partition.region(h, district), rng)?;
            state.forest[district].pieces.insert(key, piece);
        }
    }

    // the children of u and v with every edge between them
    let mut labels: Vec<usize> = h.children(level, u).to_vec();
    labels.extend_from_slice(h.children(level, v));
    let mut edges: Vec<(usize, usize, EdgeId)> = Vec::new();
    let crossing: Vec<EdgeId> = match parent_key {
        Some((n, w)) => h.home_edges(n, w).iter().copied().filter(joins).collect(),
        None => h.top_edges().iter().copied().filter(joins).collect(),
    };
    for &e in h
        .home_edges(level, u)
        .iter()
        .chain(h.home_edges(level, v))
        .chain(&crossing)
    {
        let (x, y) = h.base().edge(e);
        edges.push((h.ancestor(level - 1, x), h.ancestor(level - 1, y), e));
    }
    let g = Multigraph::from_labelled(labels, edges);
    let local: HashMap<EdgeId, usize> = g.edges.iter().enumerate().map(|(i, t)| (t.2, i)).collect();

    let old_tree: Vec<usize> = state.forest[district].pieces[&(level, u)]
        .iter()
        .chain(&state.forest[district].pieces[&(level, v)])
        .chain(std::iter::once(&old_edge))
        .map(|e| local[e])
        .collect();
    let old_cuts = count_cuts(&g, &old_tree, bounds);
    debug_assert!(old_cuts.contains(&local[&old_edge]));

    let new_tree = wilson_edges(&g, rng)?;
    let new_cuts = count_cuts(&g, &new_tree, bounds);
    if new_cuts.is_empty() {
        return Ok((
            HierarchyRecord::aborted(level, Some((u, v)), HierarchyAbort::EmptyCutSet),
            None,
        ));
    }
    let cut = new_cuts[rng.gen_range(0..new_cuts.len())];
    let side = side_of(&g, &new_tree, cut);
    let (first, second) = if rng.gen_bool(0.5) { (u, v) } else { (v, u) };
    let moves: Vec<(usize, usize)> = g
        .labels
        .iter()
        .zip(&side)
        .map(|(&child, &s)| (child, if s { first } else { second }))
        .collect();
    let next = regroup(h, level, &moves)?;
    let next_partition = Partition::new(
        &next,
        state.partition.assignment().to_vec(),
        state.num_districts(),
    )?;
    let pairs_after = candidate_pairs(&next, &next_partition, level).len();

    let log_q_fwd = -(pairs.len() as f64).ln() - (new_cuts.len() as f64).ln();
    let log_q_bwd = -(pairs_after as f64).ln() - (old_cuts.len() as f64).ln();
    let mut log_target = 0.0;
    if params.gamma != 0.0 {
        let before = three_node_log_tau(h, &state.partition, district, level, (u, v))?;
        let after = three_node_log_tau(&next, &next_partition, district, level, (u, v))?;
        log_target = -params.gamma * (after - before);
    }
    let log_accept = log_target + log_q_bwd - log_q_fwd;
    let record = |outcome| HierarchyRecord {
        level,
        pair: Some((u, v)),
        outcome,
        log_accept,
    };
    if !(log_accept >= 0.0 || rng.gen::<f64>().ln() < log_accept) {
        return Ok((record(HierarchyOutcome::Rejected), None));
    }

    let new_edge = g.edges[cut].2;
    let tree = &mut state.forest[district];
    let (mut first_piece, mut second_piece) = (Vec::new(), Vec::new());
    for &t in &new_tree {
        if t == cut {
            continue;
        }
        let (a, _, e) = g.edges[t];
        if side[a] {
            first_piece.push(e);
        } else {
            second_piece.push(e);
        }
    }
    first_piece.sort_unstable();
    second_piece.sort_unstable();
    tree.pieces.insert((level, first), first_piece);
    tree.pieces.insert((level, second), second_piece);
    let holder = match parent_key {
        Some(key) => tree.pieces.get_mut(&key).expect("resolved above"),
        None => &mut tree.top,
    };
    holder.retain(|&e| e != old_edge);
    holder.push(new_edge);
    holder.sort_unstable();
    state.partition = next_partition;
    cache.clear();
    Ok((record(HierarchyOutcome::Accepted), Some(next)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    #[test]
    fn moves_keep_hierarchy_and_state_valid() {
        let mut h = fixtures::grid_with_blocks(2, 4, 2, 1);
        let bounds = BlockBounds::new(1, 3).unwrap();
        let params = MeasureParams {
            num_districts: 2,
            gamma: 1.0,
            ..MeasureParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let link = h.base().edges().iter().position(|&e| e == (1, 2)).unwrap();
        let mut state = PlanState::new(
            &h,
            vec![0, 0, 1, 1, 0, 0, 1, 1],
            2,
            BTreeSet::from([link]),
            &mut rng,
        )
        .unwrap();
        let mut cache = TreeCountCache::new();
        let mut accepted = 0;
        for _ in 0..500 {
            let (rec, next) =
                hierarchy_move(&h, &mut state, &params, bounds, &mut cache, &mut rng).unwrap();
            if let Some(next) = next {
                assert_eq!(rec.outcome, HierarchyOutcome::Accepted);
                h = next;
                accepted += 1;
            }
            assert!(bounds.admits(&h));
            state.validate(&h, &params).unwrap();
        }
        assert!(accepted > 0);
    }

    #[test]
    fn bounds_reject_empty_ranges() {
        assert!(BlockBounds::new(0, 2).is_err());
        assert!(BlockBounds::new(3, 2).is_err());
    }
}
