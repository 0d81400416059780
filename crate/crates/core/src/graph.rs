//! Base graph, nested partition hierarchy and quotient multigraphs.
//!
//! Every multigraph edge at every level is a base edge: a quotient graph keeps
//! the base `EdgeId` of each parallel edge instead of collapsing parallel
//! edges into a weight. Weights `w_n` are cached aggregates.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::GraphError;

pub type VertexId = usize;
pub type EdgeId = usize;

/// `(level, node)` address of a vertex of some quotient graph.
pub type NodeKey = (usize, usize);

/// Finest-level graph: populations, edges, optional attributes and
/// optional clockwise neighbor orders.
#[derive(Debug, Clone)]
pub struct BaseGraph {
    names: Vec<String>,
    edges: Vec<(VertexId, VertexId)>,
    population: Vec<u64>,
    attributes: BTreeMap<String, Vec<f64>>,
    oriented: Option<Vec<Vec<VertexId>>>,
    adjacency: Vec<Vec<(VertexId, EdgeId)>>,
}

impl BaseGraph {
    /// Builds a connected simple graph. Edge ids are the positions in `edges`.
    pub fn new(population: Vec<u64>, edges: Vec<(VertexId, VertexId)>) -> Result<Self, GraphError> {
        let n = population.len();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for (id, &(u, v)) in edges.iter().enumerate() {
            for x in [u, v] {
                if x >= n {
                    return Err(GraphError::UnknownVertex {
                        edge: id,
                        vertex: x,
                    });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(id));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(GraphError::DuplicateEdge(id));
            }
            adjacency[u].push((v, id));
            adjacency[v].push((u, id));
        }
        let graph = BaseGraph {
            names: (0..n).map(|i| i.to_string()).collect(),
            edges,
            population,
            attributes: BTreeMap::new(),
            oriented: None,
            adjacency,
        };
        if !graph.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(graph)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.num_vertices());
        self.names = names;
        self
    }

    pub fn with_attribute(mut self, name: &str, values: Vec<f64>) -> Result<Self, GraphError> {
        if values.len() != self.num_vertices() {
            return Err(GraphError::PopulationLength {
                expected: self.num_vertices(),
                got: values.len(),
            });
        }
        self.attributes.insert(name.to_string(), values);
        Ok(self)
    }

    /// Attaches clockwise neighbor lists. Repeats are allowed but the set of
    /// listed vertices must equal the adjacency set.
    pub fn with_oriented_neighbors(
        mut self,
        lists: Vec<Vec<VertexId>>,
    ) -> Result<Self, GraphError> {
        if lists.len() != self.num_vertices() {
            return Err(GraphError::PopulationLength {
                expected: self.num_vertices(),
                got: lists.len(),
            });
        }
        for (v, list) in lists.iter().enumerate() {
            let listed: BTreeSet<_> = list.iter().copied().collect();
            let adjacent: BTreeSet<_> = self.adjacency[v].iter().map(|&(u, _)| u).collect();
            if listed != adjacent {
                return Err(GraphError::BadOrientation(v));
            }
        }
        self.oriented = Some(lists);
        Ok(self)
    }

    pub fn num_vertices(&self) -> usize {
        self.population.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> (VertexId, VertexId) {
        self.edges[e]
    }

    pub fn population(&self, v: VertexId) -> u64 {
        self.population[v]
    }

    pub fn populations(&self) -> &[u64] {
        &self.population
    }

    pub fn total_population(&self) -> u64 {
        self.population.iter().sum()
    }

    pub fn neighbors(&self, v: VertexId) -> &[(VertexId, EdgeId)] {
        &self.adjacency[v]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn attribute(&self, name: &str) -> Option<&[f64]> {
        self.attributes.get(name).map(|v| v.as_slice())
    }

    pub fn attributes(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.attributes
    }

    pub fn oriented_neighbors(&self) -> Option<&[Vec<VertexId>]> {
        self.oriented.as_deref()
    }

    fn is_connected(&self) -> bool {
        let n = self.num_vertices();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }
}

/// Small multigraph with local vertex indices. `labels[i]` is the
/// hierarchy node (or any caller-defined id) of local vertex `i`; each edge
/// carries the base edge it stands for.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Multigraph {
    pub labels: Vec<usize>,
    pub edges: Vec<(usize, usize, EdgeId)>,
}

impl Multigraph {
    pub fn new(labels: Vec<usize>, edges: Vec<(usize, usize, EdgeId)>) -> Self {
        Multigraph { labels, edges }
    }

    /// Builds from edges given in label space; labels must be distinct.
    pub fn from_labelled(
        labels: Vec<usize>,
        edges: impl IntoIterator<Item = (usize, usize, EdgeId)>,
    ) -> Self {
        let index: BTreeMap<usize, usize> =
            labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let edges = edges
            .into_iter()
            .map(|(a, b, e)| (index[&a], index[&b], e))
            .collect();
        Multigraph { labels, edges }
    }

    pub fn num_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.num_vertices();
        if n == 0 {
            return false;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        let mut components = n;
        for &(a, b, _) in &self.edges {
            if a == b {
                continue;
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
                components -= 1;
            }
        }
        components == 1
    }

    /// Parallel-edge count between two local vertices.
    pub fn weight(&self, a: usize, b: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(x, y, _)| (x, y) == (a, b) || (x, y) == (b, a))
            .count()
    }
}

pub(crate) fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Intersection of a hierarchy node with a region of the base graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NodeShare {
    pub pop: u64,
    pub count: u32,
    /// XOR of the per-vertex keys of the member vertices.
    pub hash: u64,
}

impl NodeShare {
    pub fn merge(self, other: NodeShare) -> NodeShare {
        NodeShare {
            pop: self.pop + other.pop,
            count: self.count + other.count,
            hash: self.hash ^ other.hash,
        }
    }
}

/// A set of base vertices with per-node intersection data.
pub trait Region {
    fn contains(&self, x: VertexId) -> bool;
    /// `None` when the node does not meet the region.
    fn share(&self, level: usize, node: usize) -> Option<NodeShare>;

    /// Neighbors of a level-n node with the count of base edges joining
    /// them inside the region, for regions that keep such counts.
    fn neighbor_weights(&self, _level: usize, _node: usize) -> Option<Vec<(usize, u64)>> {
        None
    }
}

/// Region given by an explicit membership mask.
#[derive(Debug, Clone)]
pub struct MaskRegion {
    mask: Vec<bool>,
    shares: Vec<Vec<Option<NodeShare>>>,
}

impl MaskRegion {
    pub fn new(h: &Hierarchy, mask: Vec<bool>) -> Self {
        let mut shares: Vec<Vec<Option<NodeShare>>> =
            (0..=h.levels()).map(|n| vec![None; h.size(n)]).collect();
        for (x, &inside) in mask.iter().enumerate() {
            if !inside {
                continue;
            }
            let own = NodeShare {
                pop: h.node_pop(0, x),
                count: 1,
                hash: h.vertex_key(x),
            };
            for (n, level) in shares.iter_mut().enumerate() {
                let slot = &mut level[h.ancestor(n, x)];
                *slot = Some(slot.unwrap_or_default().merge(own));
            }
        }
        MaskRegion { mask, shares }
    }

    pub fn from_vertices(h: &Hierarchy, vertices: impl IntoIterator<Item = VertexId>) -> Self {
        let mut mask = vec![false; h.size(0)];
        for v in vertices {
            mask[v] = true;
        }
        Self::new(h, mask)
    }

    pub fn whole(h: &Hierarchy) -> Self {
        Self::new(h, vec![true; h.size(0)])
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

impl Region for MaskRegion {
    fn contains(&self, x: VertexId) -> bool {
        self.mask[x]
    }

    fn share(&self, level: usize, node: usize) -> Option<NodeShare> {
        self.shares[level][node]
    }
}

/// Vertex set at one level of the hierarchy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgraphRef {
    pub level: usize,
    pub vertex_set: BTreeSet<usize>,
}

impl SubgraphRef {
    pub fn new(level: usize, vertex_set: impl IntoIterator<Item = usize>) -> Self {
        SubgraphRef {
            level,
            vertex_set: vertex_set.into_iter().collect(),
        }
    }
}

/// Nested partitions of a base graph with their quotient multigraphs.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    base: BaseGraph,
    sizes: Vec<usize>,
    /// `ancestors[n][x]`: level-n node containing base vertex `x`.
    ancestors: Vec<Vec<usize>>,
    /// `parents[n][u]`: level-(n+1) node containing level-n node `u`.
    parents: Vec<Vec<usize>>,
    /// `children[n][v]` for n ≥ 1.
    children: Vec<Vec<Vec<usize>>>,
    members: Vec<Vec<Vec<VertexId>>>,
    node_pop: Vec<Vec<u64>>,
    /// Largest level at which the endpoints of a base edge are still in
    /// different nodes.
    crossing_level: Vec<usize>,
    /// `home[n][v]`: base edges joining two different children of `v`.
    home: Vec<Vec<Vec<EdgeId>>>,
    top_edges: Vec<EdgeId>,
    weights: Vec<BTreeMap<(usize, usize), u64>>,
    vertex_keys: Vec<u64>,
    oriented: Vec<Option<Vec<Vec<usize>>>>,
}

impl Hierarchy {
    /// `partitions[k]` maps every level-k vertex to its level-(k+1) block.
    /// Block labels must be dense (`0..blocks`).
    pub fn build(base: BaseGraph, partitions: &[Vec<usize>]) -> Result<Self, GraphError> {
        let levels = partitions.len();
        let n0 = base.num_vertices();
        let mut sizes = vec![n0];
        for (k, map) in partitions.iter().enumerate() {
            if map.len() != sizes[k] {
                return Err(GraphError::PartialMap {
                    level: k + 1,
                    expected: sizes[k],
                    got: map.len(),
                });
            }
            let blocks = map.iter().copied().max().map_or(0, |m| m + 1);
            let mut used = vec![false; blocks];
            for &b in map {
                used[b] = true;
            }
            if let Some(block) = used.iter().position(|&u| !u) {
                return Err(GraphError::EmptyBlock {
                    level: k + 1,
                    block,
                });
            }
            sizes.push(blocks);
        }

        let mut ancestors = vec![(0..n0).collect::<Vec<_>>()];
        for map in partitions {
            let prev = ancestors.last().unwrap();
            ancestors.push(prev.iter().map(|&u| map[u]).collect());
        }
        let parents: Vec<Vec<usize>> = partitions.to_vec();

        let mut children = vec![Vec::new()];
        for (k, map) in partitions.iter().enumerate() {
            let mut c = vec![Vec::new(); sizes[k + 1]];
            for (u, &b) in map.iter().enumerate() {
                c[b].push(u);
            }
            children.push(c);
        }

        let mut members = vec![Vec::new()];
        let mut node_pop = vec![base.populations().to_vec()];
        for n in 1..=levels {
            let mut m = vec![Vec::new(); sizes[n]];
            let mut p = vec![0u64; sizes[n]];
            for x in 0..n0 {
                let a = ancestors[n][x];
                m[a].push(x);
                p[a] += base.population(x);
            }
            members.push(m);
            node_pop.push(p);
        }

        let crossing_level: Vec<usize> = base
            .edges()
            .iter()
            .map(|&(x, y)| {
                (0..=levels)
                    .rev()
                    .find(|&n| ancestors[n][x] != ancestors[n][y])
                    .unwrap_or(0)
            })
            .collect();

        let mut home: Vec<Vec<Vec<EdgeId>>> = vec![Vec::new()];
        for n in 1..=levels {
            home.push(vec![Vec::new(); sizes[n]]);
        }
        let mut top_edges = Vec::new();
        for (e, &(x, _)) in base.edges().iter().enumerate() {
            let k = crossing_level[e];
            if k == levels {
                top_edges.push(e);
            } else {
                home[k + 1][ancestors[k + 1][x]].push(e);
            }
        }

        for n in 1..=levels {
            for v in 0..sizes[n] {
                let kids = &children[n][v];
                let index: BTreeMap<usize, usize> =
                    kids.iter().enumerate().map(|(i, &c)| (c, i)).collect();
                let mut parent: Vec<usize> = (0..kids.len()).collect();
                let mut components = kids.len();
                for &e in &home[n][v] {
                    let (x, y) = base.edge(e);
                    let a = find(&mut parent, index[&ancestors[n - 1][x]]);
                    let b = find(&mut parent, index[&ancestors[n - 1][y]]);
                    if a != b {
                        parent[a] = b;
                        components -= 1;
                    }
                }
                if components != 1 {
                    return Err(GraphError::DisconnectedBlock { level: n, block: v });
                }
            }
        }

        let mut weights = Vec::new();
        for n in 0..=levels {
            let mut w = BTreeMap::new();
            for (e, &(x, y)) in base.edges().iter().enumerate() {
                if crossing_level[e] >= n {
                    let (a, b) = (ancestors[n][x], ancestors[n][y]);
                    *w.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
            weights.push(w);
        }

        let vertex_keys = (0..n0 as u64).map(splitmix64).collect();
        let mut oriented = vec![None; levels + 1];
        oriented[0] = base.oriented_neighbors().map(|o| o.to_vec());

        Ok(Hierarchy {
            base,
            sizes,
            ancestors,
            parents,
            children,
            members,
            node_pop,
            crossing_level,
            home,
            top_edges,
            weights,
            vertex_keys,
            oriented,
        })
    }

    /// Hierarchy with no coarsening (`ℓ = 0`).
    pub fn flat(base: BaseGraph) -> Self {
        Self::build(base, &[]).expect("flat hierarchy of a valid graph")
    }

    /// Attaches clockwise neighbor lists for the nodes of a coarse level.
    pub fn with_oriented_level(
        mut self,
        level: usize,
        lists: Vec<Vec<usize>>,
    ) -> Result<Self, GraphError> {
        self.check_level(level)?;
        if lists.len() != self.sizes[level] {
            return Err(GraphError::PopulationLength {
                expected: self.sizes[level],
                got: lists.len(),
            });
        }
        for (v, list) in lists.iter().enumerate() {
            let listed: BTreeSet<_> = list.iter().copied().collect();
            let adjacent: BTreeSet<_> = self.weights[level]
                .keys()
                .filter_map(|&(a, b)| {
                    if a == v {
                        Some(b)
                    } else if b == v {
                        Some(a)
                    } else {
                        None
                    }
                })
                .collect();
            if listed != adjacent {
                return Err(GraphError::BadOrientation(v));
            }
        }
        self.oriented[level] = Some(lists);
        Ok(self)
    }

    pub fn base(&self) -> &BaseGraph {
        &self.base
    }

    /// Number of coarsening steps `ℓ`.
    pub fn levels(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn size(&self, level: usize) -> usize {
        self.sizes[level]
    }

    pub fn ancestor(&self, level: usize, x: VertexId) -> usize {
        self.ancestors[level][x]
    }

    pub fn parent(&self, level: usize, u: usize) -> usize {
        self.parents[level][u]
    }

    pub fn partition_maps(&self) -> &[Vec<usize>] {
        &self.parents
    }

    pub fn children(&self, level: usize, v: usize) -> &[usize] {
        &self.children[level][v]
    }

    /// Base vertices inside a node.
    pub fn members(&self, level: usize, v: usize) -> &[VertexId] {
        if level == 0 {
            std::slice::from_ref(&self.ancestors[0][v])
        } else {
            &self.members[level][v]
        }
    }

    pub fn node_pop(&self, level: usize, v: usize) -> u64 {
        self.node_pop[level][v]
    }

    pub fn crossing_level(&self, e: EdgeId) -> usize {
        self.crossing_level[e]
    }

    /// Base edges that join two different children of `v` (level ≥ 1).
    pub fn home_edges(&self, level: usize, v: usize) -> &[EdgeId] {
        &self.home[level][v]
    }

    /// Base edges joining two different top-level nodes.
    pub fn top_edges(&self) -> &[EdgeId] {
        &self.top_edges
    }

    /// The node whose internal tree owns edge `e`, or `None` for a top edge.
    pub fn edge_home(&self, e: EdgeId) -> Option<NodeKey> {
        let k = self.crossing_level[e];
        if k == self.levels() {
            None
        } else {
            Some((k + 1, self.ancestors[k + 1][self.base.edge(e).0]))
        }
    }

    /// `w_n(u, v)`: base edges joining level-n nodes `u` and `v`.
    pub fn weight(&self, level: usize, u: usize, v: usize) -> u64 {
        self.weights[level]
            .get(&(u.min(v), u.max(v)))
            .copied()
            .unwrap_or(0)
    }

    pub fn weights(&self, level: usize) -> &BTreeMap<(usize, usize), u64> {
        &self.weights[level]
    }

    pub fn vertex_key(&self, x: VertexId) -> u64 {
        self.vertex_keys[x]
    }

    pub fn oriented(&self, level: usize) -> Option<&[Vec<usize>]> {
        self.oriented[level].as_deref()
    }

    fn check_level(&self, level: usize) -> Result<(), GraphError> {
        if level > self.levels() {
            Err(GraphError::LevelOutOfRange {
                level,
                top: self.levels(),
            })
        } else {
            Ok(())
        }
    }

    /// Quotient multigraph `H_n` over all level-n nodes.
    pub fn quotient_graph(&self, level: usize) -> Result<Multigraph, GraphError> {
        self.check_level(level)?;
        let edges = self
            .base
            .edges()
            .iter()
            .enumerate()
            .filter(|&(e, _)| self.crossing_level[e] >= level)
            .map(|(e, &(x, y))| (self.ancestors[level][x], self.ancestors[level][y], e))
            .collect();
        Ok(Multigraph::new((0..self.sizes[level]).collect(), edges))
    }

    /// Image of a vertex set after `j` coarsening steps.
    pub fn coarsen(&self, s: &SubgraphRef, j: usize) -> Result<SubgraphRef, GraphError> {
        self.check_level(s.level + j)?;
        let mut set = s.vertex_set.clone();
        for n in s.level..s.level + j {
            set = set.iter().map(|&u| self.parents[n][u]).collect();
        }
        Ok(SubgraphRef {
            level: s.level + j,
            vertex_set: set,
        })
    }

    /// Multigraph induced on the children of a level-n node.
    pub fn expand(&self, level: usize, v: usize) -> Result<Multigraph, GraphError> {
        if level == 0 {
            return Err(GraphError::LevelOutOfRange {
                level,
                top: self.levels(),
            });
        }
        self.check_level(level)?;
        if v >= self.sizes[level] {
            return Err(GraphError::UnknownNode { level, vertex: v });
        }
        let labels = self.children[level][v].clone();
        let edges = self.home[level][v].iter().map(|&e| {
            let (x, y) = self.base.edge(e);
            (
                self.ancestors[level - 1][x],
                self.ancestors[level - 1][y],
                e,
            )
        });
        Ok(Multigraph::from_labelled(labels, edges))
    }

    /// Multigraph on the children of `v` restricted to a region
    /// (the expansion of `v ∩ region`).
    pub fn region_piece<R: Region + ?Sized>(
        &self,
        level: usize,
        v: usize,
        region: &R,
    ) -> Multigraph {
        let labels: Vec<usize> = self.children[level][v]
            .iter()
            .copied()
            .filter(|&c| region.share(level - 1, c).is_some())
            .collect();
        let edges = self.home[level][v].iter().filter_map(|&e| {
            let (x, y) = self.base.edge(e);
            (region.contains(x) && region.contains(y)).then(|| {
                (
                    self.ancestors[level - 1][x],
                    self.ancestors[level - 1][y],
                    e,
                )
            })
        });
        Multigraph::from_labelled(labels, edges)
    }

    /// Top-level quotient restricted to a region.
    pub fn region_top<R: Region + ?Sized>(&self, region: &R) -> Multigraph {
        let top = self.levels();
        let labels: Vec<usize> = (0..self.sizes[top])
            .filter(|&u| region.share(top, u).is_some())
            .collect();
        let edges = self.top_edges.iter().filter_map(|&e| {
            let (x, y) = self.base.edge(e);
            (region.contains(x) && region.contains(y))
                .then(|| (self.ancestors[top][x], self.ancestors[top][y], e))
        });
        Multigraph::from_labelled(labels, edges)
    }

    /// Nodes at levels `1..=ℓ` meeting the region.
    pub fn region_nodes<R: Region + ?Sized>(&self, region: &R) -> Vec<NodeKey> {
        let mut out = Vec::new();
        for n in 1..=self.levels() {
            for v in 0..self.sizes[n] {
                if region.share(n, v).is_some() {
                    out.push((n, v));
                }
            }
        }
        out
    }
}

pub(crate) fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn four_cycle_two_blocks() {
        let h = fixtures::four_cycle_two_blocks();
        assert_eq!(h.levels(), 1);
        assert_eq!(h.size(1), 2);
        assert_eq!(h.weight(1, 0, 1), 2);
        let q = h.quotient_graph(1).unwrap();
        assert_eq!(q.num_edges(), 2);
    }

    #[test]
    fn identity_partition_copies_graph() {
        let g = fixtures::grid_graph(3, 3);
        let h = Hierarchy::build(g.clone(), &[(0..9).collect()]).unwrap();
        assert_eq!(h.size(1), 9);
        for (e, &(x, y)) in g.edges().iter().enumerate() {
            assert_eq!(h.weight(1, x, y), 1);
            assert_eq!(h.crossing_level(e), 1);
        }
        assert!(h.weights(1).values().all(|&w| w <= 1));
    }

    #[test]
    fn grid_blocks_weights_match_direct_count() {
        let h = fixtures::grid_with_blocks(6, 6, 2, 2);
        assert_eq!(h.size(1), 9);
        let base = h.base();
        for u in 0..9 {
            for v in (u + 1)..9 {
                let direct = base
                    .edges()
                    .iter()
                    .filter(|&&(x, y)| {
                        let (a, b) = (h.ancestor(1, x), h.ancestor(1, y));
                        (a, b) == (u, v) || (a, b) == (v, u)
                    })
                    .count() as u64;
                assert_eq!(h.weight(1, u, v), direct);
                let (ru, cu) = (u / 3, u % 3);
                let (rv, cv) = (v / 3, v % 3);
                if ru.abs_diff(rv) + cu.abs_diff(cv) == 1 {
                    assert_eq!(direct, 2);
                }
            }
        }
    }

    #[test]
    fn disconnected_block_is_rejected() {
        let g = fixtures::four_cycle();
        // {a, c} and {b, d}: opposite corners
        let err = Hierarchy::build(g, &[vec![0, 1, 0, 1]]).unwrap_err();
        assert!(matches!(
            err,
            GraphError::DisconnectedBlock { level: 1, .. }
        ));
    }

    #[test]
    fn partial_map_is_rejected() {
        let g = fixtures::four_cycle();
        let err = Hierarchy::build(g, &[vec![0, 0, 1]]).unwrap_err();
        assert!(matches!(err, GraphError::PartialMap { .. }));
    }

    #[test]
    fn coarsen_examples() {
        let h = fixtures::four_cycle_two_blocks();
        let all = SubgraphRef::new(0, 0..4);
        assert_eq!(h.coarsen(&all, 1).unwrap(), SubgraphRef::new(1, [0, 1]));
        assert_eq!(
            h.coarsen(&SubgraphRef::new(0, [2]), 1).unwrap(),
            SubgraphRef::new(1, [1])
        );
        assert_eq!(
            h.coarsen(&SubgraphRef::new(0, [0, 1]), 1).unwrap(),
            SubgraphRef::new(1, [0])
        );
        assert!(matches!(
            h.coarsen(&all, 2),
            Err(GraphError::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn expand_examples() {
        let h = fixtures::four_cycle_two_blocks();
        let g = h.expand(1, 0).unwrap();
        assert_eq!(g.labels, vec![0, 1]);
        assert_eq!(g.num_edges(), 1);
        assert!(h.expand(0, 0).is_err());

        let grid = fixtures::grid_with_blocks(6, 6, 2, 2);
        for v in 0..9 {
            let piece = grid.expand(1, v).unwrap();
            assert_eq!(piece.num_vertices(), 4);
            assert_eq!(piece.num_edges(), 4);
        }

        let single = Hierarchy::build(fixtures::path_graph(3), &[vec![0, 1, 1]]).unwrap();
        let g = single.expand(1, 0).unwrap();
        assert_eq!((g.num_vertices(), g.num_edges()), (1, 0));
    }

    #[test]
    fn expand_then_coarsen_is_identity() {
        let h = fixtures::grid_with_blocks(6, 6, 2, 2);
        for v in 0..9 {
            let kids = h.expand(1, v).unwrap().labels;
            let back = h.coarsen(&SubgraphRef::new(0, kids), 1).unwrap();
            assert_eq!(back, SubgraphRef::new(1, [v]));
        }
    }

    #[test]
    fn weights_plus_internal_edges_cover_all_edges() {
        let h = fixtures::nested_grid(8, 8, &[(2, 2), (2, 2)]);
        for n in 0..=h.levels() {
            let crossing: u64 = h.weights(n).values().sum();
            let internal = h
                .base()
                .edges()
                .iter()
                .filter(|&&(x, y)| h.ancestor(n, x) == h.ancestor(n, y))
                .count() as u64;
            assert_eq!(crossing + internal, h.base().num_edges() as u64);
        }
        // recursive definition: w_n(u,v) = Σ w_{n-1} over coarsened pairs
        for n in 1..=h.levels() {
            let mut agg: BTreeMap<(usize, usize), u64> = BTreeMap::new();
            for (&(a, b), &w) in h.weights(n - 1) {
                let (pa, pb) = (h.parent(n - 1, a), h.parent(n - 1, b));
                if pa != pb {
                    *agg.entry((pa.min(pb), pa.max(pb))).or_insert(0) += w;
                }
            }
            assert_eq!(&agg, h.weights(n));
        }
    }
}
