//! Cut-set search: which tree edges can be removed to leave two
//! population-feasible parts, expanding unresolved nodes only when a
//! feasible cut might hide inside them.

use rand::Rng;

use super::view::{AtomTree, Rooted};
use crate::error::{ProposalError, TreeError};
use crate::graph::{EdgeId, Hierarchy, NodeKey, Region, VertexId};
use crate::measure::PopBounds;
use crate::tree::{sample_piece, MultiScaleTree};

/// Default largest degree for which every subset of components is tried.
pub const DEFAULT_EXHAUSTIVE_DEGREE: usize = 12;

/// Population windows for the two parts of a cut; either part may take
/// either window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitTarget {
    pub first: (u64, u64),
    pub second: (u64, u64),
}

impl SplitTarget {
    pub fn symmetric(bounds: PopBounds) -> Self {
        SplitTarget {
            first: (bounds.lo, bounds.hi),
            second: (bounds.lo, bounds.hi),
        }
    }

    pub fn accepts(&self, a: u64, b: u64) -> bool {
        let within = |w: (u64, u64), x: u64| w.0 <= x && x <= w.1;
        (within(self.first, a) && within(self.second, b))
            || (within(self.second, a) && within(self.first, b))
    }

    fn largest(&self) -> u64 {
        self.first.1.max(self.second.1)
    }

    /// Whether components summing to `chosen` (the rest summing to `rest`)
    /// could join some part of a node of population `own` on each side.
    fn admits(&self, chosen: u64, rest: u64, own: u64) -> bool {
        let fits = |w: (u64, u64), x: u64| (w.0 as i128 - own as i128) <= x as i128 && x <= w.1;
        (fits(self.first, chosen) && fits(self.second, rest))
            || (fits(self.second, chosen) && fits(self.first, rest))
    }
}

/// Tries every subset of components.
pub fn subsets_exhaustive(components: &[u64], own: u64, target: &SplitTarget) -> bool {
    let total: u64 = components.iter().sum();
    if components.iter().any(|&c| c > target.largest()) {
        return false;
    }
    (0u64..1 << components.len()).any(|mask| {
        let chosen: u64 = components
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &c)| c)
            .sum();
        target.admits(chosen, total - chosen, own)
    })
}

/// Breadth-first search over contiguous arcs of components in clockwise
/// order: the empty arc, then single components, each arc grown to the
/// right while its population stays within the largest window. Arcs longer
/// than half the ring are covered by their complements and never queued.
/// `visited` receives the membership string of every arc checked.
pub fn subsets_by_arcs(
    clockwise: &[u64],
    own: u64,
    target: &SplitTarget,
    mut visited: Option<&mut Vec<Vec<bool>>>,
) -> bool {
    let k = clockwise.len();
    let total: u64 = clockwise.iter().sum();
    if clockwise.iter().any(|&c| c > target.largest()) {
        return false;
    }
    let mut record = |start: usize, len: usize| {
        if let Some(v) = visited.as_deref_mut() {
            let mut s = vec![false; k];
            for i in 0..len {
                s[(start + i) % k] = true;
            }
            v.push(s);
        }
    };
    record(0, 0);
    if target.admits(0, total, own) {
        return true;
    }
    let keep = |start: usize, len: usize| 2 * len < k || (2 * len == k && start < k / 2);
    let mut queue: std::collections::VecDeque<(usize, usize, u64)> = (0..k)
        .filter(|&s| keep(s, 1))
        .map(|s| (s, 1, clockwise[s]))
        .collect();
    while let Some((start, len, sum)) = queue.pop_front() {
        record(start, len);
        if target.admits(sum, total - sum, own) {
            return true;
        }
        if sum <= target.largest() && keep(start, len + 1) {
            queue.push_back((start, len + 1, sum + clockwise[(start + len) % k]));
        }
    }
    false
}

/// Options steering the cut search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutOptions {
    pub exhaustive_degree: usize,
    /// Edges joining two different top-level nodes may be cut.
    pub allow_top_edges: bool,
    /// Edges inside top-level nodes may be cut (and nodes expanded).
    pub allow_inner_edges: bool,
}

impl Default for CutOptions {
    fn default() -> Self {
        CutOptions {
            exhaustive_degree: DEFAULT_EXHAUSTIVE_DEGREE,
            allow_top_edges: true,
            allow_inner_edges: true,
        }
    }
}

/// Decides whether an unresolved atom could contain a feasible cut.
pub fn should_expand(
    h: &Hierarchy,
    view: &AtomTree,
    rooted: &Rooted,
    atom: usize,
    target: &SplitTarget,
    exhaustive_degree: usize,
) -> Result<bool, ProposalError> {
    let (level, node) = view.atoms[atom];
    let comps = rooted.components(view, atom);
    let own = view.pops[atom];
    if comps.iter().any(|c| c.1 > target.largest()) {
        return Ok(false);
    }
    if let Some(order) = clockwise_components(h, view, atom, &comps, level, node) {
        return Ok(subsets_by_arcs(&order, own, target, None));
    }
    if comps.len() > exhaustive_degree {
        return Err(ProposalError::DegreeTooLarge {
            degree: comps.len(),
            bound: exhaustive_degree,
        });
    }
    let pops: Vec<u64> = comps.iter().map(|c| c.1).collect();
    Ok(subsets_exhaustive(&pops, own, target))
}

/// Component populations in the node's clockwise neighbor order, when the
/// level carries an orientation and every tree neighbor appears in it.
fn clockwise_components(
    h: &Hierarchy,
    view: &AtomTree,
    atom: usize,
    comps: &[(usize, u64)],
    level: usize,
    node: usize,
) -> Option<Vec<u64>> {
    let order = h.oriented(level)?.get(node)?;
    let mut keyed = Vec::with_capacity(comps.len());
    for (&(_, e), &(_, pop)) in view.adj[atom].iter().zip(comps) {
        let (x, y) = h.base().edge(view.edges[e].2);
        let far = if h.ancestor(level, x) == node { y } else { x };
        let w = h.ancestor(level, far);
        let position = order.iter().position(|&u| u == w)?;
        keyed.push((position, pop));
    }
    keyed.sort_unstable();
    if keyed.windows(2).any(|p| p[0].0 == p[1].0) {
        return None;
    }
    Some(keyed.into_iter().map(|k| k.1).collect())
}

/// An edge whose removal leaves two feasible parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutCandidate {
    pub edge: EdgeId,
    /// Crossing level of the edge.
    pub level_found: usize,
    /// Population of the part away from the search root.
    pub side_population: u64,
}

/// Result of a cut search over one merged tree.
#[derive(Debug, Clone)]
pub struct CutSet {
    pub candidates: Vec<CutCandidate>,
    /// Nodes whose interiors were drawn during the search.
    pub expanded: Vec<NodeKey>,
    pub view: AtomTree,
    pub rooted: Rooted,
}

impl CutSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn contains(&self, e: EdgeId) -> bool {
        self.candidates.iter().any(|c| c.edge == e)
    }

    /// Base vertices of the two parts left by removing a tree edge; the
    /// first part is the one holding the edge's first endpoint.
    pub fn sides<R: Region + ?Sized>(
        &self,
        h: &Hierarchy,
        region: &R,
        e: EdgeId,
    ) -> (Vec<VertexId>, Vec<VertexId>) {
        let idx = self
            .view
            .edges
            .iter()
            .position(|t| t.2 == e)
            .expect("edge is in the tree");
        let child = self.rooted.child_of_edge(&self.view, idx);
        let (mut below, mut above) = (Vec::new(), Vec::new());
        for (a, &(n, v)) in self.view.atoms.iter().enumerate() {
            let out = if self.rooted.in_subtree(a, child) {
                &mut below
            } else {
                &mut above
            };
            out.extend(
                h.members(n, v)
                    .iter()
                    .copied()
                    .filter(|&x| region.contains(x)),
            );
        }
        below.sort_unstable();
        above.sort_unstable();
        if below.binary_search(&h.base().edge(e).0).is_ok() {
            (below, above)
        } else {
            (above, below)
        }
    }
}

/// `ln P_cut = −ln |E_c|` for a member of the cut set.
pub fn cut_probability(cuts: &CutSet, chosen: EdgeId) -> Result<f64, ProposalError> {
    if !cuts.contains(chosen) {
        return Err(ProposalError::NotACandidate(chosen));
    }
    Ok(-(cuts.len() as f64).ln())
}

/// Finds every edge of the (eventually fully resolved) tree whose removal
/// yields parts inside the target windows and passes `allowed`. Unresolved
/// nodes that might hide such an edge are drawn and recorded in the tree.
pub fn find_cut_set<R, G>(
    h: &Hierarchy,
    region: &R,
    tree: &mut MultiScaleTree,
    target: &SplitTarget,
    options: &CutOptions,
    allowed: &mut dyn FnMut(EdgeId) -> bool,
    rng: &mut G,
) -> Result<CutSet, TreeError>
where
    R: Region + ?Sized,
    G: Rng + ?Sized,
{
    let mut expanded = Vec::new();
    loop {
        let view = AtomTree::build(h, region, tree);
        let rooted = Rooted::new(&view, rng.gen_range(0..view.len()));
        let mut grow = Vec::new();
        if options.allow_inner_edges {
            for (a, &(n, _)) in view.atoms.iter().enumerate() {
                if n == 0 {
                    continue;
                }
                let expand = should_expand(h, &view, &rooted, a, target, options.exhaustive_degree)
                    .unwrap_or(true);
                if expand {
                    grow.push(view.atoms[a]);
                }
            }
        }
        if grow.is_empty() {
            let total = rooted.sub_pop[rooted.root];
            let mut candidates = Vec::new();
            for (idx, &(_, _, e)) in view.edges.iter().enumerate() {
                let level = h.crossing_level(e);
                let top_edge = level == h.levels();
                if (top_edge && !options.allow_top_edges)
                    || (!top_edge && !options.allow_inner_edges)
                {
                    continue;
                }
                let side = rooted.sub_pop[rooted.child_of_edge(&view, idx)];
                if target.accepts(side, total - side) && allowed(e) {
                    candidates.push(CutCandidate {
                        edge: e,
                        level_found: level,
                        side_population: side,
                    });
                }
            }
            candidates.sort_unstable_by_key(|c| c.edge);
            return Ok(CutSet {
                candidates,
                expanded,
                view,
                rooted,
            });
        }
        for key in grow {
            let piece = sample_piece(h, key, region, rng)?;
            tree.pieces.insert(key, piece);
            expanded.push(key);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::{Hierarchy, MaskRegion};
    use crate::tree::{sample_hierarchical_tree, Resolve};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exact(pop: u64) -> SplitTarget {
        SplitTarget {
            first: (pop, pop),
            second: (pop, pop),
        }
    }

    #[test]
    fn two_unit_components_around_a_pair() {
        assert!(subsets_exhaustive(&[1, 1], 2, &exact(2)));
        assert!(subsets_by_arcs(&[1, 1], 2, &exact(2), None));
    }

    #[test]
    fn oversized_component_blocks_expansion() {
        let t = SplitTarget {
            first: (3, 5),
            second: (3, 5),
        };
        assert!(!subsets_exhaustive(&[10, 1], 1, &t));
        assert!(!subsets_by_arcs(&[10, 1], 1, &t, None));
    }

    #[test]
    fn arc_search_visit_order() {
        // five tree neighbours in clockwise order; nothing is feasible so the
        // whole search runs
        let mut seen = Vec::new();
        let t = SplitTarget {
            first: (1000, 1000),
            second: (1000, 1000),
        };
        assert!(!subsets_by_arcs(&[1, 1, 1, 1, 1], 1, &t, Some(&mut seen)));
        let strings: Vec<String> = seen
            .iter()
            .map(|s| s.iter().map(|&a| if a { 'A' } else { 'B' }).collect())
            .collect();
        assert_eq!(
            &strings[..6],
            &["BBBBB", "ABBBB", "BABBB", "BBABB", "BBBAB", "BBBBA"]
        );
        assert!(strings.contains(&"AABBB".to_string()));
        assert!(strings.contains(&"ABBBA".to_string()));
        let complement = |s: &String| {
            s.chars()
                .map(|c| if c == 'A' { 'B' } else { 'A' })
                .collect::<String>()
        };
        for s in &strings {
            assert!(
                !strings.contains(&complement(s)),
                "{s} and its complement both visited"
            );
        }
        assert_eq!(strings.len(), 11);
    }

    #[test]
    fn even_ring_never_visits_complements() {
        let mut seen = Vec::new();
        let t = SplitTarget {
            first: (1000, 1000),
            second: (1000, 1000),
        };
        subsets_by_arcs(&[1, 1, 1, 1], 1, &t, Some(&mut seen));
        for (i, a) in seen.iter().enumerate() {
            for b in &seen[i + 1..] {
                assert!(a.iter().zip(b).any(|(x, y)| x == y));
            }
        }
    }

    #[test]
    fn path_of_four_has_one_balanced_cut() {
        let h = Hierarchy::flat(fixtures::path_graph(4));
        let region = MaskRegion::whole(&h);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tree = sample_hierarchical_tree(&h, &region, Resolve::Lazy, &mut rng).unwrap();
        let cuts = find_cut_set(
            &h,
            &region,
            &mut tree,
            &exact(2),
            &CutOptions::default(),
            &mut |_| true,
            &mut rng,
        )
        .unwrap();
        assert_eq!(cuts.candidates.len(), 1);
        assert_eq!(cuts.candidates[0].edge, 1);
        assert_eq!(cut_probability(&cuts, 1).unwrap(), 0.0);
        assert_eq!(
            cut_probability(&cuts, 0),
            Err(ProposalError::NotACandidate(0))
        );
        let (a, b) = cuts.sides(&h, &region, 1);
        assert_eq!((a, b), (vec![0, 1], vec![2, 3]));
    }

    #[test]
    fn lazy_search_matches_full_resolution() {
        let h = fixtures::nested_grid(8, 8, &[(2, 2), (2, 2)]);
        let region = MaskRegion::whole(&h);
        let target = SplitTarget {
            first: (30, 34),
            second: (30, 34),
        };
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut lazy = sample_hierarchical_tree(&h, &region, Resolve::Lazy, &mut rng).unwrap();
            let cuts = find_cut_set(
                &h,
                &region,
                &mut lazy,
                &target,
                &CutOptions::default(),
                &mut |_| true,
                &mut rng,
            )
            .unwrap();
            // resolve everything else and recount directly
            let mut full = lazy.clone();
            for key in h.region_nodes(&region) {
                if !full.is_resolved(key) {
                    full.pieces
                        .insert(key, sample_piece(&h, key, &region, &mut rng).unwrap());
                }
            }
            let again = find_cut_set(
                &h,
                &region,
                &mut full,
                &target,
                &CutOptions::default(),
                &mut |_| true,
                &mut rng,
            )
            .unwrap();
            let edges = |c: &CutSet| c.candidates.iter().map(|c| c.edge).collect::<Vec<_>>();
            assert_eq!(edges(&cuts), edges(&again), "seed {seed}");
        }
    }
}
