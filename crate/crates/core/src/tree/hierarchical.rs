//! Hierarchical spanning trees: counting, uniform sampling and the lazily
//! resolved multi-scale representation.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use super::count::{
    count_spanning_trees_with, log_determinant, log_spanning_trees, TreeCount, DEFAULT_EXACT_CUTOFF,
};
use super::wilson::wilson_edges;
use crate::error::TreeError;
use crate::graph::{find, EdgeId, Hierarchy, Multigraph, NodeKey, Region};

/// A hierarchical spanning tree of one region. `top` spans the region's
/// top-level quotient; `pieces[(n, v)]` spans the children of node `v`
/// inside the region. A node without a piece is unresolved: some uniform
/// tree exists inside it but has not been drawn.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MultiScaleTree {
    pub top: Vec<EdgeId>,
    pub pieces: BTreeMap<NodeKey, Vec<EdgeId>>,
}

impl MultiScaleTree {
    pub fn is_resolved(&self, key: NodeKey) -> bool {
        self.pieces.contains_key(&key)
    }

    /// All concrete base edges: the top tree and every resolved piece.
    pub fn edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.top
            .iter()
            .copied()
            .chain(self.pieces.values().flatten().copied())
    }

    pub fn num_resolved(&self) -> usize {
        self.pieces.len()
    }
}

/// How much of a sampled hierarchical tree to draw up front.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolve {
    Lazy,
    Full,
}

fn to_base(g: &Multigraph, local: Vec<usize>) -> Vec<EdgeId> {
    let mut edges: Vec<EdgeId> = local.into_iter().map(|i| g.edges[i].2).collect();
    edges.sort_unstable();
    edges
}

/// Uniform spanning tree of the region's top-level quotient.
pub fn sample_top<R: Region + ?Sized, G: Rng + ?Sized>(
    h: &Hierarchy,
    region: &R,
    rng: &mut G,
) -> Result<Vec<EdgeId>, TreeError> {
    let g = h.region_top(region);
    let local = wilson_edges(&g, rng).map_err(|e| at_level(e, h.levels()))?;
    Ok(to_base(&g, local))
}

/// Uniform spanning tree of the children of `key` inside the region.
pub fn sample_piece<R: Region + ?Sized, G: Rng + ?Sized>(
    h: &Hierarchy,
    key: NodeKey,
    region: &R,
    rng: &mut G,
) -> Result<Vec<EdgeId>, TreeError> {
    let g = h.region_piece(key.0, key.1, region);
    let local = wilson_edges(&g, rng).map_err(|e| at_level(e, key.0 - 1))?;
    Ok(to_base(&g, local))
}

fn at_level(e: TreeError, level: usize) -> TreeError {
    match e {
        TreeError::Disconnected => TreeError::DisconnectedAtLevel(level),
        other => other,
    }
}

/// Draws a uniform element of the region's hierarchical trees by sampling
/// the top quotient and (when `Full`) every node interior independently.
pub fn sample_hierarchical_tree<R: Region + ?Sized, G: Rng + ?Sized>(
    h: &Hierarchy,
    region: &R,
    resolve: Resolve,
    rng: &mut G,
) -> Result<MultiScaleTree, TreeError> {
    let mut tree = MultiScaleTree {
        top: sample_top(h, region, rng)?,
        pieces: BTreeMap::new(),
    };
    if resolve == Resolve::Full {
        for key in h.region_nodes(region) {
            tree.pieces.insert(key, sample_piece(h, key, region, rng)?);
        }
    }
    Ok(tree)
}

/// `τ_ℋ` of a region with the default exact cutoff.
pub fn count_hierarchical_trees<R: Region + ?Sized>(
    h: &Hierarchy,
    region: &R,
) -> Result<TreeCount, TreeError> {
    count_hierarchical_trees_with(h, region, DEFAULT_EXACT_CUTOFF)
}

/// `τ_ℋ(region) = τ(top quotient) · Π τ(node interiors)`.
pub fn count_hierarchical_trees_with<R: Region + ?Sized>(
    h: &Hierarchy,
    region: &R,
    exact_cutoff: usize,
) -> Result<TreeCount, TreeError> {
    let top = h.region_top(region);
    let mut total =
        count_spanning_trees_with(&top, exact_cutoff).map_err(|e| at_level(e, h.levels()))?;
    for (n, v) in h.region_nodes(region) {
        let piece = h.region_piece(n, v, region);
        let c = count_spanning_trees_with(&piece, exact_cutoff).map_err(|e| at_level(e, n - 1))?;
        total = total.mul(&c);
    }
    Ok(total)
}

/// Whether the region admits at least one hierarchical tree.
pub fn has_hierarchical_tree<R: Region + ?Sized>(h: &Hierarchy, region: &R) -> bool {
    h.region_top(region).is_connected()
        && h.region_nodes(region)
            .into_iter()
            .all(|(n, v)| h.region_piece(n, v, region).is_connected())
}

/// `ln τ` of the multigraph on `vertices` (all at `level`) built from the
/// region's own edge counts; `None` when the region keeps no counts.
fn log_count_from_weights<R: Region + ?Sized>(
    region: &R,
    level: usize,
    vertices: &[usize],
) -> Option<Result<f64, TreeError>> {
    let n = vertices.len();
    let index: HashMap<usize, usize> = vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut lap = vec![vec![0i64; n]; n];
    let mut parent: Vec<usize> = (0..n).collect();
    let mut components = n;
    for (i, &a) in vertices.iter().enumerate() {
        for (b, w) in region.neighbor_weights(level, a)? {
            if let Some(&j) = index.get(&b) {
                lap[i][i] += w as i64;
                lap[i][j] -= w as i64;
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                    components -= 1;
                }
            }
        }
    }
    if n == 0 {
        return Some(Err(TreeError::Empty));
    }
    if components != 1 {
        return Some(Err(TreeError::DisconnectedAtLevel(level)));
    }
    lap.pop();
    for row in &mut lap {
        row.pop();
    }
    Some(Ok(log_determinant(&lap)))
}

/// Memo of `ln τ` for node interiors keyed by the node and the identity of
/// the region's vertices inside it.
#[derive(Debug, Default, Clone)]
pub struct TreeCountCache {
    map: HashMap<(usize, usize, u32, u64), f64>,
    pub hits: u64,
    pub misses: u64,
}

impl TreeCountCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn clear(&mut self) {
        self.map.clear();
    }

    /// `ln τ` of the interior of `key ∩ region`; zero when the node does not
    /// meet the region.
    pub fn log_node<R: Region + ?Sized>(
        &mut self,
        h: &Hierarchy,
        key: NodeKey,
        region: &R,
    ) -> Result<f64, TreeError> {
        let Some(share) = region.share(key.0, key.1) else {
            return Ok(0.0);
        };
        if share.count == 1 {
            return Ok(0.0);
        }
        let memo = (key.0, key.1, share.count, share.hash);
        if let Some(&v) = self.map.get(&memo) {
            self.hits += 1;
            return Ok(v);
        }
        self.misses += 1;
        let children: Vec<usize> = h
            .children(key.0, key.1)
            .iter()
            .copied()
            .filter(|&c| region.share(key.0 - 1, c).is_some())
            .collect();
        let v = match log_count_from_weights(region, key.0 - 1, &children) {
            Some(r) => r?,
            None => log_spanning_trees(&h.region_piece(key.0, key.1, region))
                .map_err(|e| at_level(e, key.0 - 1))?,
        };
        self.map.insert(memo, v);
        Ok(v)
    }

    /// `ln τ` of the region's top-level quotient.
    pub fn log_top<R: Region + ?Sized>(
        &mut self,
        h: &Hierarchy,
        region: &R,
    ) -> Result<f64, TreeError> {
        let top = h.levels();
        let (mut count, mut hash) = (0u32, 0u64);
        let mut nodes = Vec::new();
        for u in 0..h.size(top) {
            if let Some(s) = region.share(top, u) {
                count += 1;
                hash ^= s.hash;
                nodes.push(u);
            }
        }
        let memo = (top + 1, 0, count, hash);
        if let Some(&v) = self.map.get(&memo) {
            self.hits += 1;
            return Ok(v);
        }
        self.misses += 1;
        let v = match log_count_from_weights(region, top, &nodes) {
            Some(r) => r?,
            None => log_spanning_trees(&h.region_top(region)).map_err(|e| at_level(e, top))?,
        };
        self.map.insert(memo, v);
        Ok(v)
    }

    /// `ln τ_ℋ(region)` from cached factors.
    pub fn log_hierarchical<R: Region + ?Sized>(
        &mut self,
        h: &Hierarchy,
        region: &R,
    ) -> Result<f64, TreeError> {
        let mut total = self.log_top(h, region)?;
        for key in h.region_nodes(region) {
            total += self.log_node(h, key, region)?;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::MaskRegion;
    use num_bigint::BigUint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn four_cycle_has_two_hierarchical_trees() {
        let h = fixtures::four_cycle_two_blocks();
        let c = count_hierarchical_trees(&h, &MaskRegion::whole(&h)).unwrap();
        assert_eq!(c.value, Some(BigUint::from(2u32)));
    }

    #[test]
    fn identity_hierarchy_counts_all_trees() {
        let g = fixtures::grid_graph(3, 3);
        let h = crate::graph::Hierarchy::build(g, &[(0..9).collect(), vec![0; 9]]).unwrap();
        let c = count_hierarchical_trees(&h, &MaskRegion::whole(&h)).unwrap();
        assert_eq!(c.value, Some(BigUint::from(192u32)));
    }

    #[test]
    fn cache_matches_direct_count() {
        let h = fixtures::nested_grid(8, 8, &[(2, 2), (2, 2)]);
        let mut cache = TreeCountCache::new();
        let mask: Vec<bool> = (0..64).map(|x| x % 8 < 5).collect();
        let region = MaskRegion::new(&h, mask);
        let direct = count_hierarchical_trees(&h, &region).unwrap();
        let cached = cache.log_hierarchical(&h, &region).unwrap();
        assert!((direct.log_value - cached).abs() < 1e-9 * direct.log_value);
        let again = cache.log_hierarchical(&h, &region).unwrap();
        assert_eq!(cached, again);
        assert!(cache.hits > 0);
    }

    #[test]
    fn district_weights_give_the_same_counts() {
        let h = fixtures::nested_grid(8, 8, &[(2, 2), (2, 2)]);
        let assignment: Vec<usize> = (0..64)
            .map(|x| usize::from(x % 8 >= if x / 8 < 4 { 3 } else { 5 }))
            .collect();
        let p = crate::state::Partition::new(&h, assignment.clone(), 2).unwrap();
        for d in 0..2 {
            let fast = TreeCountCache::new()
                .log_hierarchical(&h, &p.region(&h, d))
                .unwrap();
            let mask = MaskRegion::new(&h, assignment.iter().map(|&a| a == d).collect());
            let slow = TreeCountCache::new().log_hierarchical(&h, &mask).unwrap();
            assert!((fast - slow).abs() < 1e-9 * slow.abs().max(1.0));
        }
    }

    #[test]
    fn full_sample_has_every_piece() {
        let h = fixtures::grid_with_blocks(6, 6, 2, 2);
        let region = MaskRegion::whole(&h);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = sample_hierarchical_tree(&h, &region, Resolve::Full, &mut rng).unwrap();
        assert_eq!(t.top.len(), 8);
        assert_eq!(t.pieces.len(), 9);
        assert_eq!(t.edges().count(), 35);
        let lazy = sample_hierarchical_tree(&h, &region, Resolve::Lazy, &mut rng).unwrap();
        assert_eq!(lazy.num_resolved(), 0);
    }

    #[test]
    fn disconnected_piece_is_reported_with_its_level() {
        let h = fixtures::grid_with_blocks(4, 4, 2, 2);
        // diagonal corners of the first block only
        let region = MaskRegion::from_vertices(&h, [0, 5, 1, 2, 3, 6, 7]);
        assert!(count_hierarchical_trees(&h, &region).is_ok());
        let region = MaskRegion::from_vertices(&h, [0, 5, 2, 6]);
        assert!(!has_hierarchical_tree(&h, &region));
        assert_eq!(
            count_hierarchical_trees(&h, &region),
            Err(TreeError::DisconnectedAtLevel(0))
        );
    }
}
