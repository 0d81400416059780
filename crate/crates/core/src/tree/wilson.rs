//! Uniform spanning trees of multigraphs by loop-erased random walks.

use rand::Rng;

use crate::error::TreeError;
use crate::graph::{EdgeId, Multigraph};

/// Spanning tree of a multigraph, given by base edge ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningTree {
    pub edge_ids: Vec<EdgeId>,
    /// Labels of the spanned multigraph vertices.
    pub vertex_set: Vec<usize>,
    pub level: usize,
}

/// Draws a uniform spanning tree. Each walk step picks a uniform incident
/// edge, so parallel edges are chosen in proportion to multiplicity.
/// Returns the multigraph-local indices of the chosen edges.
pub fn wilson_edges<R: Rng + ?Sized>(g: &Multigraph, rng: &mut R) -> Result<Vec<usize>, TreeError> {
    let n = g.num_vertices();
    if n == 0 {
        return Err(TreeError::Empty);
    }
    if !g.is_connected() {
        return Err(TreeError::Disconnected);
    }
    let mut incident: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, &(a, b, _)) in g.edges.iter().enumerate() {
        if a != b {
            incident[a].push((b, i));
            incident[b].push((a, i));
        }
    }
    let mut in_tree = vec![false; n];
    let mut next: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); n];
    in_tree[rng.gen_range(0..n)] = true;
    for start in 0..n {
        let mut u = start;
        while !in_tree[u] {
            let step = incident[u][rng.gen_range(0..incident[u].len())];
            next[u] = step;
            u = step.0;
        }
        let mut u = start;
        while !in_tree[u] {
            in_tree[u] = true;
            u = next[u].0;
        }
    }
    let mut chosen: Vec<usize> = (0..n)
        .filter_map(|v| (next[v].1 != usize::MAX).then_some(next[v].1))
        .collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Uniform spanning tree carrying base edge ids.
pub fn wilson_sample<R: Rng + ?Sized>(
    g: &Multigraph,
    level: usize,
    rng: &mut R,
) -> Result<SpanningTree, TreeError> {
    let local = wilson_edges(g, rng)?;
    Ok(SpanningTree {
        edge_ids: local.into_iter().map(|i| g.edges[i].2).collect(),
        vertex_set: g.labels.clone(),
        level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn mg(n: usize, edges: &[(usize, usize)]) -> Multigraph {
        Multigraph::new(
            (0..n).collect(),
            edges
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| (a, b, i))
                .collect(),
        )
    }

    #[test]
    fn single_edge_is_always_chosen() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = mg(2, &[(0, 1)]);
        for _ in 0..10 {
            assert_eq!(wilson_sample(&g, 0, &mut rng).unwrap().edge_ids, vec![0]);
        }
    }

    #[test]
    fn trees_are_spanning_and_acyclic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = crate::fixtures::grid_graph(5, 5);
        let g = Multigraph::new(
            (0..25).collect(),
            base.edges()
                .iter()
                .enumerate()
                .map(|(e, &(a, b))| (a, b, e))
                .collect(),
        );
        for _ in 0..20 {
            let t = wilson_sample(&g, 0, &mut rng).unwrap();
            assert_eq!(t.edge_ids.len(), 24);
            let sub = Multigraph::new(
                (0..25).collect(),
                t.edge_ids
                    .iter()
                    .map(|&e| (base.edge(e).0, base.edge(e).1, e))
                    .collect(),
            );
            assert!(sub.is_connected());
        }
    }

    #[test]
    fn parallel_edges_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = mg(2, &[(0, 1), (0, 1), (0, 1)]);
        let mut counts = BTreeMap::new();
        let n = 30_000;
        for _ in 0..n {
            *counts
                .entry(wilson_sample(&g, 0, &mut rng).unwrap().edge_ids[0])
                .or_insert(0usize) += 1;
        }
        for &c in counts.values() {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn disconnected_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(
            wilson_edges(&mg(3, &[(0, 1)]), &mut rng),
            Err(TreeError::Disconnected)
        );
    }
}
