//! District assignment with incrementally maintained per-node occupancy.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use smallvec::SmallVec;

use crate::error::StateError;
use crate::graph::{Hierarchy, NodeKey, NodeShare, Region, VertexId};

/// One district's share of a hierarchy node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occupant {
    pub district: usize,
    pub share: NodeShare,
}

type Occupants = SmallVec<[Occupant; 2]>;

/// Crossing edge counts keyed by `(other node, own district, other district)`.
type CrossingCounts = HashMap<(usize, usize, usize), u32>;

/// Assignment of base vertices to districts plus the bookkeeping the
/// sampler reads on every step: district populations, which districts
/// touch each coarse node, the split nodes per level and, for every pair
/// of districts, the coarse nodes they share.
#[derive(Debug, Clone)]
pub struct Partition {
    assignment: Vec<usize>,
    num_districts: usize,
    district_pop: Vec<u64>,
    district_size: Vec<usize>,
    /// `occupancy[n][v]` for levels n ≥ 1; index 0 is unused.
    occupancy: Vec<Vec<Occupants>>,
    split: Vec<BTreeSet<usize>>,
    pair_nodes: BTreeMap<(usize, usize), BTreeSet<NodeKey>>,
    cut_edges: usize,
    /// `weights[n][a]`: base edges crossing level ≥ n from node `a` to node
    /// `b`, keyed by `(b, district of the a-side endpoint, district of the
    /// b-side endpoint)`; levels n ≥ 1.
    weights: Vec<Vec<CrossingCounts>>,
}

pub(crate) fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl Partition {
    pub fn new(
        h: &Hierarchy,
        assignment: Vec<usize>,
        num_districts: usize,
    ) -> Result<Self, StateError> {
        let n0 = h.size(0);
        if assignment.len() != n0 {
            return Err(StateError::AssignmentLength {
                expected: n0,
                got: assignment.len(),
            });
        }
        if let Some(&bad) = assignment.iter().find(|&&d| d >= num_districts) {
            return Err(StateError::BadDistrict(bad));
        }
        let mut p = Partition {
            assignment,
            num_districts,
            district_pop: vec![0; num_districts],
            district_size: vec![0; num_districts],
            occupancy: (0..=h.levels())
                .map(|n| {
                    if n == 0 {
                        Vec::new()
                    } else {
                        vec![Occupants::new(); h.size(n)]
                    }
                })
                .collect(),
            split: vec![BTreeSet::new(); h.levels() + 1],
            pair_nodes: BTreeMap::new(),
            cut_edges: 0,
            weights: (0..=h.levels())
                .map(|n| {
                    if n == 0 {
                        Vec::new()
                    } else {
                        vec![HashMap::new(); h.size(n)]
                    }
                })
                .collect(),
        };
        for x in 0..n0 {
            let d = p.assignment[x];
            p.district_pop[d] += h.node_pop(0, x);
            p.district_size[d] += 1;
            for n in 1..=h.levels() {
                add_share(&mut p.occupancy[n][h.ancestor(n, x)], d, own_share(h, x));
            }
        }
        if let Some(empty) = p.district_size.iter().position(|&s| s == 0) {
            return Err(StateError::Invalid(format!("district {empty} is empty")));
        }
        for n in 1..=h.levels() {
            for v in 0..h.size(n) {
                let ids: SmallVec<[usize; 4]> =
                    p.occupancy[n][v].iter().map(|o| o.district).collect();
                p.index_node((n, v), &[], &ids);
            }
        }
        p.cut_edges = h
            .base()
            .edges()
            .iter()
            .filter(|&&(x, y)| p.assignment[x] != p.assignment[y])
            .count();
        for (e, &(x, y)) in h.base().edges().iter().enumerate() {
            let (dx, dy) = (p.assignment[x], p.assignment[y]);
            for n in 1..=h.crossing_level(e) {
                p.bump_weight(h, n, x, y, dx, dy, 1);
            }
        }
        Ok(p)
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn district_of(&self, x: VertexId) -> usize {
        self.assignment[x]
    }

    pub fn num_districts(&self) -> usize {
        self.num_districts
    }

    pub fn district_pop(&self, d: usize) -> u64 {
        self.district_pop[d]
    }

    pub fn district_pops(&self) -> &[u64] {
        &self.district_pop
    }

    pub fn district_size(&self, d: usize) -> usize {
        self.district_size[d]
    }

    pub fn district_vertices(&self, d: usize) -> Vec<VertexId> {
        (0..self.assignment.len())
            .filter(|&x| self.assignment[x] == d)
            .collect()
    }

    /// Districts meeting a node at level ≥ 1.
    pub fn occupants(&self, level: usize, node: usize) -> &[Occupant] {
        &self.occupancy[level][node]
    }

    pub fn touches(&self, level: usize, node: usize, district: usize) -> bool {
        if level == 0 {
            self.assignment[node] == district
        } else {
            self.occupancy[level][node]
                .iter()
                .any(|o| o.district == district)
        }
    }

    /// Nodes at `level` (≥ 1) meeting two or more districts.
    pub fn split_nodes(&self, level: usize) -> &BTreeSet<usize> {
        &self.split[level]
    }

    /// Coarse nodes met by both districts, ordered finest first.
    pub fn shared_nodes(&self, a: usize, b: usize) -> Option<&BTreeSet<NodeKey>> {
        self.pair_nodes.get(&ordered(a, b))
    }

    pub fn finest_shared(&self, a: usize, b: usize) -> Option<NodeKey> {
        self.shared_nodes(a, b)
            .and_then(|s| s.iter().next().copied())
    }

    /// Every pair of districts sharing at least one coarse node.
    pub fn sharing_pairs(&self) -> impl Iterator<Item = (&(usize, usize), &BTreeSet<NodeKey>)> {
        self.pair_nodes.iter()
    }

    pub fn cut_edge_count(&self) -> usize {
        self.cut_edges
    }

    /// Region covering one district.
    pub fn region<'a>(&'a self, h: &'a Hierarchy, d: usize) -> Districts<'a> {
        Districts {
            h,
            p: self,
            ids: [d, d],
        }
    }

    /// Region covering the union of two districts.
    pub fn pair_region<'a>(&'a self, h: &'a Hierarchy, a: usize, b: usize) -> Districts<'a> {
        Districts {
            h,
            p: self,
            ids: [a, b],
        }
    }

    /// Moves vertices to new districts, updating all cached structure.
    pub fn reassign(&mut self, h: &Hierarchy, moves: &[(VertexId, usize)]) {
        let mut touched: BTreeMap<NodeKey, SmallVec<[usize; 4]>> = BTreeMap::new();
        for &(x, to) in moves {
            let from = self.assignment[x];
            if from == to {
                continue;
            }
            for n in 1..=h.levels() {
                let v = h.ancestor(n, x);
                touched
                    .entry((n, v))
                    .or_insert_with(|| self.occupancy[n][v].iter().map(|o| o.district).collect());
            }
            for &(y, e) in h.base().neighbors(x) {
                let other = self.assignment[y];
                for n in 1..=h.crossing_level(e) {
                    self.bump_weight(h, n, x, y, from, other, -1);
                    self.bump_weight(h, n, x, y, to, other, 1);
                }
                if other == from {
                    self.cut_edges += 1;
                }
                if other == to {
                    self.cut_edges -= 1;
                }
            }
            self.assignment[x] = to;
            let pop = h.node_pop(0, x);
            self.district_pop[from] -= pop;
            self.district_pop[to] += pop;
            self.district_size[from] -= 1;
            self.district_size[to] += 1;
            let own = own_share(h, x);
            for n in 1..=h.levels() {
                let slot = &mut self.occupancy[n][h.ancestor(n, x)];
                remove_share(slot, from, own);
                add_share(slot, to, own);
            }
        }
        for (key, before) in touched {
            let after: SmallVec<[usize; 4]> = self.occupancy[key.0][key.1]
                .iter()
                .map(|o| o.district)
                .collect();
            self.index_node(key, &before, &after);
        }
    }

    fn bump_weight(
        &mut self,
        h: &Hierarchy,
        n: usize,
        x: VertexId,
        y: VertexId,
        dx: usize,
        dy: usize,
        delta: i32,
    ) {
        let (a, b) = (h.ancestor(n, x), h.ancestor(n, y));
        for (u, key) in [(a, (b, dx, dy)), (b, (a, dy, dx))] {
            let slot = self.weights[n][u].entry(key).or_insert(0);
            *slot = slot
                .checked_add_signed(delta)
                .expect("weight stays nonnegative");
            if *slot == 0 {
                self.weights[n][u].remove(&key);
            }
        }
    }

    /// Neighbors of a level-n node with the number of base edges joining
    /// them whose endpoints both lie in the given districts.
    pub fn node_weights(
        &self,
        h: &Hierarchy,
        level: usize,
        node: usize,
        districts: [usize; 2],
    ) -> Vec<(usize, u64)> {
        let inside = |d: usize| d == districts[0] || d == districts[1];
        if level == 0 {
            if !inside(self.assignment[node]) {
                return Vec::new();
            }
            return h
                .base()
                .neighbors(node)
                .iter()
                .filter(|&&(y, _)| inside(self.assignment[y]))
                .map(|&(y, _)| (y, 1))
                .collect();
        }
        let mut out: BTreeMap<usize, u64> = BTreeMap::new();
        for (&(b, da, db), &w) in &self.weights[level][node] {
            if inside(da) && inside(db) {
                *out.entry(b).or_default() += u64::from(w);
            }
        }
        out.into_iter().collect()
    }

    fn index_node(&mut self, key: NodeKey, before: &[usize], after: &[usize]) {
        for (i, &a) in before.iter().enumerate() {
            for &b in &before[i + 1..] {
                let pair = ordered(a, b);
                if let Some(set) = self.pair_nodes.get_mut(&pair) {
                    set.remove(&key);
                    if set.is_empty() {
                        self.pair_nodes.remove(&pair);
                    }
                }
            }
        }
        for (i, &a) in after.iter().enumerate() {
            for &b in &after[i + 1..] {
                self.pair_nodes
                    .entry(ordered(a, b))
                    .or_default()
                    .insert(key);
            }
        }
        if after.len() >= 2 {
            self.split[key.0].insert(key.1);
        } else {
            self.split[key.0].remove(&key.1);
        }
    }

    /// Recomputes every cache from the assignment and compares.
    pub fn check_consistency(&self, h: &Hierarchy) -> Result<(), String> {
        let fresh = Partition::new(h, self.assignment.clone(), self.num_districts)
            .map_err(|e| e.to_string())?;
        if fresh.district_pop != self.district_pop || fresh.district_size != self.district_size {
            return Err("district totals out of date".into());
        }
        if fresh.split != self.split {
            return Err("split registry out of date".into());
        }
        if fresh.pair_nodes != self.pair_nodes {
            return Err("shared-node index out of date".into());
        }
        if fresh.cut_edges != self.cut_edges {
            return Err("cut edge count out of date".into());
        }
        if fresh.weights != self.weights {
            return Err("district edge weights out of date".into());
        }
        for n in 1..=h.levels() {
            for v in 0..h.size(n) {
                let mut a = fresh.occupancy[n][v].to_vec();
                let mut b = self.occupancy[n][v].to_vec();
                a.sort_by_key(|o| o.district);
                b.sort_by_key(|o| o.district);
                if a != b {
                    return Err(format!("occupancy of node ({n}, {v}) out of date"));
                }
            }
        }
        Ok(())
    }
}

fn own_share(h: &Hierarchy, x: VertexId) -> NodeShare {
    NodeShare {
        pop: h.node_pop(0, x),
        count: 1,
        hash: h.vertex_key(x),
    }
}

fn add_share(slot: &mut Occupants, d: usize, s: NodeShare) {
    match slot.iter_mut().find(|o| o.district == d) {
        Some(o) => o.share = o.share.merge(s),
        None => slot.push(Occupant {
            district: d,
            share: s,
        }),
    }
}

fn remove_share(slot: &mut Occupants, d: usize, s: NodeShare) {
    let i = slot
        .iter()
        .position(|o| o.district == d)
        .expect("vertex was counted in its district");
    let o = &mut slot[i].share;
    o.pop -= s.pop;
    o.count -= 1;
    o.hash ^= s.hash;
    if o.count == 0 {
        slot.remove(i);
    }
}

/// One district, or the union of two, viewed as a region.
#[derive(Debug, Clone, Copy)]
pub struct Districts<'a> {
    h: &'a Hierarchy,
    p: &'a Partition,
    ids: [usize; 2],
}

impl Districts<'_> {
    pub fn ids(&self) -> [usize; 2] {
        self.ids
    }
}

impl Region for Districts<'_> {
    fn contains(&self, x: VertexId) -> bool {
        let d = self.p.assignment[x];
        d == self.ids[0] || d == self.ids[1]
    }

    fn share(&self, level: usize, node: usize) -> Option<NodeShare> {
        if level == 0 {
            return self.contains(node).then(|| own_share(self.h, node));
        }
        let mut out: Option<NodeShare> = None;
        for o in &self.p.occupancy[level][node] {
            if o.district == self.ids[0] || o.district == self.ids[1] {
                out = Some(out.map_or(o.share, |s| s.merge(o.share)));
            }
        }
        out
    }

    fn neighbor_weights(&self, level: usize, node: usize) -> Option<Vec<(usize, u64)>> {
        Some(self.p.node_weights(self.h, level, node, self.ids))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::MaskRegion;

    #[test]
    fn four_cycle_split() {
        let h = fixtures::four_cycle_two_blocks();
        let p = Partition::new(&h, vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(p.district_pops(), &[2, 2]);
        assert!(p.split_nodes(1).is_empty());
        assert_eq!(p.cut_edge_count(), 2);
        let q = Partition::new(&h, vec![0, 1, 1, 0], 2).unwrap();
        assert_eq!(q.split_nodes(1).len(), 2);
        assert_eq!(q.shared_nodes(0, 1).unwrap().len(), 2);
    }

    #[test]
    fn reassign_keeps_caches_consistent() {
        let h = fixtures::nested_grid(8, 8, &[(2, 2), (2, 2)]);
        let mut p =
            Partition::new(&h, (0..64).map(|x| usize::from(x % 8 >= 4)).collect(), 2).unwrap();
        p.reassign(&h, &[(3, 1), (11, 1), (12, 0)]);
        p.check_consistency(&h).unwrap();
        p.reassign(&h, &[(3, 0), (11, 0), (12, 1)]);
        p.check_consistency(&h).unwrap();
        assert!(p.split_nodes(1).is_empty());
    }

    #[test]
    fn node_weights_match_multigraph_counts() {
        let h = fixtures::nested_grid(8, 8, &[(2, 2), (2, 2)]);
        let assignment: Vec<usize> = (0..64).map(|x| (x % 8 + x / 8) % 3).collect();
        let mut p = Partition::new(&h, assignment, 3).unwrap();
        p.reassign(&h, &[(9, 0), (10, 2), (40, 1)]);
        for ids in [[0, 0], [0, 2], [1, 2]] {
            let region = p.pair_region(&h, ids[0], ids[1]);
            for n in 0..=h.levels() {
                for a in 0..h.size(n) {
                    for (b, w) in p.node_weights(&h, n, a, ids) {
                        let direct = h
                            .base()
                            .edges()
                            .iter()
                            .filter(|&&(x, y)| {
                                region.contains(x)
                                    && region.contains(y)
                                    && ((h.ancestor(n, x), h.ancestor(n, y)) == (a, b)
                                        || (h.ancestor(n, x), h.ancestor(n, y)) == (b, a))
                            })
                            .count() as u64;
                        assert_eq!(w, direct);
                    }
                }
            }
        }
    }

    #[test]
    fn district_region_matches_mask_region() {
        let h = fixtures::nested_grid(8, 8, &[(2, 2), (2, 2)]);
        let assignment: Vec<usize> = (0..64).map(|x| (x % 8 + x / 8) % 3).collect();
        let p = Partition::new(&h, assignment.clone(), 3).unwrap();
        let region = p.pair_region(&h, 0, 2);
        let mask = MaskRegion::new(&h, assignment.iter().map(|&d| d != 1).collect());
        for n in 0..=h.levels() {
            for v in 0..h.size(n) {
                assert_eq!(region.share(n, v), mask.share(n, v));
            }
        }
    }
}
