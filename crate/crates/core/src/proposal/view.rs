//! The coarse-grained view of a partially resolved hierarchical tree: every
//! unresolved node collapses to a single weighted vertex ("atom").

use std::collections::HashMap;

use crate::graph::{EdgeId, Hierarchy, NodeKey, Region, VertexId};
use crate::tree::MultiScaleTree;

/// Node of the finest resolved level containing a base vertex: walking down
/// from the top, the first node whose interior has not been drawn, or the
/// vertex itself.
pub fn atom_of(h: &Hierarchy, tree: &MultiScaleTree, x: VertexId) -> NodeKey {
    for n in (1..=h.levels()).rev() {
        let v = h.ancestor(n, x);
        if !tree.is_resolved((n, v)) {
            return (n, v);
        }
    }
    (0, x)
}

/// Tree over atoms whose edges are the concrete edges of a multi-scale tree.
#[derive(Debug, Clone)]
pub struct AtomTree {
    pub atoms: Vec<NodeKey>,
    pub pops: Vec<u64>,
    index: HashMap<NodeKey, usize>,
    pub edges: Vec<(usize, usize, EdgeId)>,
    pub adj: Vec<Vec<(usize, usize)>>,
}

impl AtomTree {
    pub fn build<R: Region + ?Sized>(h: &Hierarchy, region: &R, tree: &MultiScaleTree) -> Self {
        let top = h.levels();
        let mut atoms = Vec::new();
        let mut pops = Vec::new();
        let mut stack: Vec<NodeKey> = (0..h.size(top))
            .rev()
            .filter(|&u| region.share(top, u).is_some())
            .map(|u| (top, u))
            .collect();
        while let Some((n, v)) = stack.pop() {
            if n > 0 && tree.is_resolved((n, v)) {
                for &c in h.children(n, v).iter().rev() {
                    if region.share(n - 1, c).is_some() {
                        stack.push((n - 1, c));
                    }
                }
            } else {
                atoms.push((n, v));
                pops.push(region.share(n, v).map_or(0, |s| s.pop));
            }
        }
        let index: HashMap<NodeKey, usize> =
            atoms.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        let mut edges = Vec::new();
        let mut adj = vec![Vec::new(); atoms.len()];
        for e in tree.edges() {
            let (x, y) = h.base().edge(e);
            let (a, b) = (index[&atom_of(h, tree, x)], index[&atom_of(h, tree, y)]);
            if a != b {
                adj[a].push((b, edges.len()));
                adj[b].push((a, edges.len()));
                edges.push((a, b, e));
            }
        }
        AtomTree {
            atoms,
            pops,
            index,
            edges,
            adj,
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn index_of(&self, key: NodeKey) -> Option<usize> {
        self.index.get(&key).copied()
    }

    pub fn total_pop(&self) -> u64 {
        self.pops.iter().sum()
    }

    pub fn is_spanning_tree(&self) -> bool {
        if self.edges.len() + 1 != self.atoms.len() {
            return false;
        }
        Rooted::new(self, 0).order.len() == self.atoms.len()
    }
}

/// An atom tree hung from a root with subtree populations.
#[derive(Debug, Clone)]
pub struct Rooted {
    pub root: usize,
    pub parent: Vec<usize>,
    pub parent_edge: Vec<usize>,
    pub order: Vec<usize>,
    pub sub_pop: Vec<u64>,
    enter: Vec<usize>,
    exit: Vec<usize>,
}

impl Rooted {
    pub fn new(tree: &AtomTree, root: usize) -> Self {
        let n = tree.len();
        let mut parent = vec![usize::MAX; n];
        let mut parent_edge = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        let mut enter = vec![usize::MAX; n];
        let mut exit = vec![0; n];
        let mut stack = vec![(root, 0usize)];
        enter[root] = 0;
        order.push(root);
        while let Some(&(u, next)) = stack.last() {
            if let Some(&(v, e)) = tree.adj[u].get(next) {
                stack.last_mut().expect("nonempty").1 += 1;
                if v != parent[u] && enter[v] == usize::MAX {
                    parent[v] = u;
                    parent_edge[v] = e;
                    enter[v] = order.len();
                    order.push(v);
                    stack.push((v, 0));
                }
            } else {
                exit[u] = order.len();
                stack.pop();
            }
        }
        let mut sub_pop = tree.pops.clone();
        for &u in order.iter().rev() {
            if parent[u] != usize::MAX {
                sub_pop[parent[u]] += sub_pop[u];
            }
        }
        Rooted {
            root,
            parent,
            parent_edge,
            order,
            sub_pop,
            enter,
            exit,
        }
    }

    /// The endpoint of an atom-tree edge farther from the root.
    pub fn child_of_edge(&self, tree: &AtomTree, edge: usize) -> usize {
        let (a, b, _) = tree.edges[edge];
        if self.parent_edge[a] == edge {
            a
        } else {
            b
        }
    }

    pub fn in_subtree(&self, node: usize, of: usize) -> bool {
        self.enter[of] <= self.enter[node] && self.enter[node] < self.exit[of]
    }

    /// Populations of the components left by deleting an atom, with the
    /// neighbor atom through which each attaches.
    pub fn components(&self, tree: &AtomTree, atom: usize) -> Vec<(usize, u64)> {
        let total = self.sub_pop[self.root];
        tree.adj[atom]
            .iter()
            .map(|&(nb, _)| {
                if self.parent[nb] == atom {
                    (nb, self.sub_pop[nb])
                } else {
                    (nb, total - self.sub_pop[atom])
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::MaskRegion;
    use crate::tree::{sample_hierarchical_tree, Resolve};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lazy_tree_collapses_to_top_nodes() {
        let h = fixtures::grid_with_blocks(6, 6, 2, 2);
        let region = MaskRegion::whole(&h);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tree = sample_hierarchical_tree(&h, &region, Resolve::Lazy, &mut rng).unwrap();
        let view = AtomTree::build(&h, &region, &tree);
        assert_eq!(view.len(), 9);
        assert!(view.is_spanning_tree());
        assert!(view.pops.iter().all(|&p| p == 4));
    }

    #[test]
    fn full_tree_has_base_atoms() {
        let h = fixtures::nested_grid(8, 8, &[(2, 2), (2, 2)]);
        let region = MaskRegion::whole(&h);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tree = sample_hierarchical_tree(&h, &region, Resolve::Full, &mut rng).unwrap();
        let view = AtomTree::build(&h, &region, &tree);
        assert_eq!(view.len(), 64);
        assert!(view.is_spanning_tree());
        let rooted = Rooted::new(&view, 5);
        assert_eq!(rooted.sub_pop[5], 64);
        for a in 0..view.len() {
            let comps = rooted.components(&view, a);
            let total: u64 = comps.iter().map(|c| c.1).sum();
            assert_eq!(total + view.pops[a], 64);
        }
    }
}
