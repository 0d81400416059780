//! Brute-force ground truth for tiny instances: connected partitions,
//! spanning and hierarchical trees, linking-edge sets and the exact target
//! law. Everything here is computed by direct enumeration with its own
//! connectivity, tree and link-rule code so it can check the sampler.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::graph::{EdgeId, Hierarchy, VertexId};
use crate::measure::{LinkScheme, MeasureParams, SoftTerm};

/// Largest base graph the partition enumerator accepts.
pub const MAX_ORACLE_VERTICES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("{what} has {size} elements, above the oracle limit {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },
    #[error("oracle needs {0}")]
    Unsupported(&'static str),
}

fn cap(what: &'static str, size: usize, limit: usize) -> Result<(), OracleError> {
    if size > limit {
        return Err(OracleError::TooLarge { what, size, limit });
    }
    Ok(())
}

/// Whether `vertices` induce a connected subgraph of `edges`.
fn connected(vertices: &[VertexId], edges: &[(VertexId, VertexId)]) -> bool {
    let Some(&start) = vertices.first() else {
        return false;
    };
    let inside: BTreeSet<VertexId> = vertices.iter().copied().collect();
    let mut reached = BTreeSet::from([start]);
    let mut frontier = vec![start];
    while let Some(x) = frontier.pop() {
        for &(a, b) in edges {
            let other = if a == x {
                b
            } else if b == x {
                a
            } else {
                continue;
            };
            if inside.contains(&other) && reached.insert(other) {
                frontier.push(other);
            }
        }
    }
    reached.len() == inside.len()
}

/// Every spanning tree of a multigraph on `0..n`, as sorted edge-index
/// lists, by include/exclude recursion.
pub fn enumerate_spanning_trees(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    fn root(label: &[usize], mut x: usize) -> usize {
        while label[x] != x {
            x = label[x];
        }
        x
    }
    fn still_connectable(
        n: usize,
        edges: &[(usize, usize)],
        chosen: &[usize],
        from: usize,
    ) -> bool {
        let mut label: Vec<usize> = (0..n).collect();
        let mut parts = n;
        for &i in chosen
            .iter()
            .chain(&(from..edges.len()).collect::<Vec<_>>())
        {
            let (a, b) = (root(&label, edges[i].0), root(&label, edges[i].1));
            if a != b {
                label[a] = b;
                parts -= 1;
            }
        }
        parts == 1
    }
    fn walk(
        n: usize,
        edges: &[(usize, usize)],
        next: usize,
        chosen: &mut Vec<usize>,
        label: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if chosen.len() + 1 == n {
            out.push(chosen.clone());
            return;
        }
        if next == edges.len() {
            return;
        }
        let (a, b) = (root(label, edges[next].0), root(label, edges[next].1));
        if a != b {
            let saved = label.clone();
            label[a] = b;
            chosen.push(next);
            walk(n, edges, next + 1, chosen, label, out);
            chosen.pop();
            *label = saved;
        }
        if still_connectable(n, edges, chosen, next + 1) {
            walk(n, edges, next + 1, chosen, label, out);
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    if n == 1 {
        out.push(Vec::new());
        return out;
    }
    let mut label: Vec<usize> = (0..n).collect();
    walk(n, edges, 0, &mut Vec::new(), &mut label, &mut out);
    out
}

/// Base-edge subgraph induced on `vertices` with local indices.
fn induced(h: &Hierarchy, vertices: &[VertexId]) -> (Vec<(usize, usize)>, Vec<EdgeId>) {
    let index: BTreeMap<VertexId, usize> =
        vertices.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let mut local = Vec::new();
    let mut ids = Vec::new();
    for (e, &(x, y)) in h.base().edges().iter().enumerate() {
        if let (Some(&a), Some(&b)) = (index.get(&x), index.get(&y)) {
            local.push((a, b));
            ids.push(e);
        }
    }
    (local, ids)
}

/// Whether a spanning tree of `vertices` (base edge ids) projects to a
/// spanning tree at every coarse level: for each level the number of edges
/// between different nodes is one less than the number of nodes met, and
/// those edges connect them.
pub fn is_hierarchical_tree(h: &Hierarchy, vertices: &[VertexId], tree: &[EdgeId]) -> bool {
    for n in 1..=h.levels() {
        let nodes: BTreeSet<usize> = vertices.iter().map(|&x| h.ancestor(n, x)).collect();
        let crossing: Vec<(usize, usize)> = tree
            .iter()
            .map(|&e| {
                let (x, y) = h.base().edge(e);
                (h.ancestor(n, x), h.ancestor(n, y))
            })
            .filter(|(a, b)| a != b)
            .collect();
        if crossing.len() + 1 != nodes.len() {
            return false;
        }
        let nodes: Vec<usize> = nodes.into_iter().collect();
        if !connected(&nodes, &crossing) {
            return false;
        }
    }
    true
}

/// Every hierarchical spanning tree of the subgraph induced on `vertices`.
pub fn enumerate_hierarchical_trees(
    h: &Hierarchy,
    vertices: &[VertexId],
    edge_limit: usize,
) -> Result<Vec<Vec<EdgeId>>, OracleError> {
    let (local, ids) = induced(h, vertices);
    cap("induced edge set", local.len(), edge_limit)?;
    Ok(enumerate_spanning_trees(vertices.len(), &local)
        .into_iter()
        .map(|t| t.into_iter().map(|i| ids[i]).collect::<Vec<_>>())
        .filter(|t| is_hierarchical_tree(h, vertices, t))
        .collect())
}

/// Relabels districts in order of first appearance.
pub fn canonical_labels(assignment: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    assignment
        .iter()
        .map(|&d| {
            let next = map.len();
            *map.entry(d).or_insert(next)
        })
        .collect()
}

fn districts_of(assignment: &[usize], d: usize) -> Vec<Vec<VertexId>> {
    let mut out = vec![Vec::new(); d];
    for (x, &a) in assignment.iter().enumerate() {
        out[a].push(x);
    }
    out
}

/// Coarse nodes (level ≥ 1) met by each district.
fn touched_nodes(h: &Hierarchy, members: &[Vec<VertexId>]) -> Vec<BTreeSet<(usize, usize)>> {
    members
        .iter()
        .map(|m| {
            m.iter()
                .flat_map(|&x| (1..=h.levels()).map(move |n| (n, h.ancestor(n, x))))
                .collect()
        })
        .collect()
}

fn population_window(h: &Hierarchy, params: &MeasureParams) -> (u64, u64) {
    let total: u64 = (0..h.size(0)).map(|x| h.base().population(x)).sum();
    let d = params.num_districts as u64;
    let ideal = params.pop_ideal.unwrap_or((2 * total + d) / (2 * d));
    let slack = (ideal as f64 * params.pop_tol).floor() as u64;
    (ideal.saturating_sub(slack), ideal + slack)
}

/// Populations, connectivity and the coarse-node rules; tree existence and
/// linkability are checked by the counts.
fn basic_feasible(h: &Hierarchy, params: &MeasureParams, members: &[Vec<VertexId>]) -> bool {
    let (lo, hi) = population_window(h, params);
    for m in members {
        let pop: u64 = m.iter().map(|&x| h.base().population(x)).sum();
        if pop < lo || pop > hi || !connected(m, h.base().edges()) {
            return false;
        }
    }
    let touched = touched_nodes(h, members);
    let top = h.levels();
    let mut meeting: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in &touched {
        for &key in t {
            *meeting.entry(key).or_default() += 1;
        }
    }
    for (&(n, _), &count) in &meeting {
        let limit = if n == top {
            params.max_districts_per_top_node
        } else {
            2
        };
        if count > limit {
            return false;
        }
    }
    if let Some(max) = params.max_split_top_nodes {
        let split = meeting
            .iter()
            .filter(|(&(n, _), &c)| n == top && top > 0 && c >= 2)
            .count();
        if split > max {
            return false;
        }
    }
    for a in 0..touched.len() {
        for b in a + 1..touched.len() {
            let shared: Vec<_> = touched[a].intersection(&touched[b]).collect();
            let levels: BTreeSet<usize> = shared.iter().map(|k| k.0).collect();
            if levels.len() != shared.len() {
                return false;
            }
        }
    }
    true
}

/// Number of valid linking-edge sets. With `size`, only sets of exactly
/// that many links are counted (used when links may join unshared pairs).
pub fn count_link_sets(
    h: &Hierarchy,
    params: &MeasureParams,
    assignment: &[usize],
    size: Option<usize>,
) -> BigUint {
    let members = districts_of(assignment, params.num_districts);
    let touched = touched_nodes(h, &members);
    let d = members.len();
    let mut options: Vec<((usize, usize), Vec<EdgeId>, bool)> = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            let crossing: Vec<EdgeId> = h
                .base()
                .edges()
                .iter()
                .enumerate()
                .filter(|(_, &(x, y))| {
                    let (p, q) = (assignment[x], assignment[y]);
                    (p, q) == (a, b) || (p, q) == (b, a)
                })
                .map(|(e, _)| e)
                .collect();
            let finest = touched[a].intersection(&touched[b]).min().copied();
            let allowed: Vec<EdgeId> = match finest {
                Some((n, v)) => crossing
                    .into_iter()
                    .filter(|&e| {
                        let (x, y) = h.base().edge(e);
                        h.ancestor(n, x) == v && h.ancestor(n, y) == v
                    })
                    .collect(),
                None => crossing.clone(),
            };
            let adjacent = h.base().edges().iter().any(|&(x, y)| {
                let (p, q) = (assignment[x], assignment[y]);
                (p, q) == (a, b) || (p, q) == (b, a)
            });
            let (required, permitted) = match params.link_scheme {
                LinkScheme::PerAdjacentPair => (adjacent, adjacent),
                LinkScheme::FixedCountStrict => (
                    finest.is_some(),
                    finest.is_some() || params.allow_spanning_links,
                ),
            };
            if permitted || required {
                options.push(((a, b), allowed, required));
            }
        }
    }
    // per pair: how many ways to place 0 or 1 links, tracked by link count
    let mut ways: BTreeMap<usize, BigUint> = BTreeMap::from([(0, BigUint::one())]);
    for (_, allowed, required) in &options {
        let mut next: BTreeMap<usize, BigUint> = BTreeMap::new();
        for (&k, w) in &ways {
            if !required {
                *next.entry(k).or_insert_with(BigUint::zero) += w;
            }
            if !allowed.is_empty() {
                *next.entry(k + 1).or_insert_with(BigUint::zero) +=
                    w * BigUint::from(allowed.len());
            }
        }
        ways = next;
    }
    match size {
        Some(k) => ways.get(&k).cloned().unwrap_or_default(),
        None => {
            if params.link_scheme == LinkScheme::FixedCountStrict && params.allow_spanning_links {
                ways.values().fold(BigUint::zero(), |acc, w| acc + w)
            } else {
                // every permitted pair is required here
                ways.get(&options.len()).cloned().unwrap_or_default()
            }
        }
    }
}

/// Soft score recomputed from the assignment.
fn soft_value(h: &Hierarchy, params: &MeasureParams, assignment: &[usize]) -> f64 {
    let cut = h
        .base()
        .edges()
        .iter()
        .filter(|&&(x, y)| assignment[x] != assignment[y])
        .count();
    let top = h.levels();
    let split = if top == 0 {
        0
    } else {
        (0..h.size(top))
            .filter(|&v| {
                let ds: BTreeSet<usize> =
                    h.members(top, v).iter().map(|&x| assignment[x]).collect();
                ds.len() >= 2
            })
            .count()
    };
    params
        .soft_terms
        .iter()
        .map(|t| match *t {
            SoftTerm::CutEdges { weight } => weight * cut as f64,
            SoftTerm::SplitTopNodes { weight } => weight * split as f64,
        })
        .sum()
}

/// One feasible partition with its exact multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleState {
    /// Canonically labelled assignment.
    pub assignment: Vec<usize>,
    /// `τ_ℋ(ξ)`: product of the districts' hierarchical tree counts.
    pub trees: BigUint,
    /// `ℒ(ξ)`.
    pub links: BigUint,
    pub soft: f64,
}

/// Exact law of the partition marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedLaw {
    pub states: Vec<OracleState>,
    /// Unnormalized marginal masses `e^{−βJ} (τ_ℋ ℒ)^{1−γ}`.
    pub masses: Vec<f64>,
    /// Exact masses when β = 0 and γ ∈ {0, 1}.
    pub exact: Option<Vec<BigRational>>,
}

impl EnumeratedLaw {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Normalized probabilities keyed by canonical assignment.
    pub fn probabilities(&self) -> BTreeMap<Vec<usize>, f64> {
        let exact_total = self
            .exact
            .as_ref()
            .map(|m| m.iter().fold(BigRational::zero(), |a, b| a + b));
        let total: f64 = self.masses.iter().sum();
        self.states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let p = match (&self.exact, &exact_total) {
                    (Some(m), Some(t)) => (&m[i] / t).to_f64().unwrap_or(f64::NAN),
                    _ => self.masses[i] / total,
                };
                (s.assignment.clone(), p)
            })
            .collect()
    }
}

/// Options for the brute-force enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    /// Largest induced edge set per district for tree enumeration.
    pub edges_per_district: usize,
    /// Exact link-set size when links may join unshared pairs.
    pub link_set_size: Option<usize>,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            edges_per_district: 24,
            link_set_size: None,
        }
    }
}

/// All feasible partitions, canonically labelled, in lexicographic order.
pub fn enumerate_partitions(
    h: &Hierarchy,
    params: &MeasureParams,
) -> Result<Vec<Vec<usize>>, OracleError> {
    let n = h.size(0);
    cap("base graph", n, MAX_ORACLE_VERTICES)?;
    let d = params.num_districts;
    let mut out = Vec::new();
    let mut current = vec![0usize; n];
    fn grow(i: usize, used: usize, d: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let n = current.len();
        if i == n {
            if used == d {
                out.push(current.clone());
            }
            return;
        }
        if d - used > n - i {
            return;
        }
        for label in 0..=used.min(d - 1) {
            current[i] = label;
            grow(i + 1, used.max(label + 1), d, current, out);
        }
    }
    if n > 0 {
        grow(1, 1, d, &mut current, &mut out);
    }
    Ok(out
        .into_iter()
        .filter(|a| basic_feasible(h, params, &districts_of(a, d)))
        .collect())
}

/// Exact partition law of the target measure.
pub fn exact_law(
    h: &Hierarchy,
    params: &MeasureParams,
    limits: OracleLimits,
) -> Result<EnumeratedLaw, OracleError> {
    let mut states = Vec::new();
    for assignment in enumerate_partitions(h, params)? {
        let members = districts_of(&assignment, params.num_districts);
        let mut trees = BigUint::one();
        for m in &members {
            trees *=
                BigUint::from(enumerate_hierarchical_trees(h, m, limits.edges_per_district)?.len());
        }
        let links = count_link_sets(h, params, &assignment, limits.link_set_size);
        if trees.is_zero() || links.is_zero() {
            continue;
        }
        let soft = soft_value(h, params, &assignment);
        states.push(OracleState {
            assignment,
            trees,
            links,
            soft,
        });
    }
    let masses = states
        .iter()
        .map(|s| {
            let multiplicity = biguint_f64(&s.trees) * biguint_f64(&s.links);
            (-params.beta * s.soft).exp() * multiplicity.powf(1.0 - params.gamma)
        })
        .collect();
    let exact = (params.beta == 0.0 && (params.gamma == 0.0 || params.gamma == 1.0)).then(|| {
        states
            .iter()
            .map(|s| {
                if params.gamma == 1.0 {
                    BigRational::one()
                } else {
                    BigRational::from_integer((&s.trees * &s.links).into())
                }
            })
            .collect()
    });
    Ok(EnumeratedLaw {
        states,
        masses,
        exact,
    })
}

fn biguint_f64(x: &BigUint) -> f64 {
    x.to_f64().unwrap_or(f64::INFINITY)
}

/// One hierarchy of the dynamic space together with its partition law.
#[derive(Debug, Clone)]
pub struct HierarchyLaw {
    /// Canonically labelled level-0 to level-1 map.
    pub blocks: Vec<usize>,
    pub law: EnumeratedLaw,
}

/// Joint law over (single coarse level hierarchy, partition) pairs: every
/// split of the base graph into `num_blocks` connected blocks whose sizes
/// lie in `[min_block, max_block]`, each carrying its own partition law.
pub fn exact_joint_law(
    h: &Hierarchy,
    params: &MeasureParams,
    num_blocks: usize,
    min_block: usize,
    max_block: usize,
    limits: OracleLimits,
) -> Result<Vec<HierarchyLaw>, OracleError> {
    if h.levels() != 1 {
        return Err(OracleError::Unsupported(
            "a hierarchy with exactly one coarse level",
        ));
    }
    let n = h.size(0);
    cap("base graph", n, 10)?;
    let mut out = Vec::new();
    let mut current = vec![0usize; n];
    let mut maps = Vec::new();
    fn grow(i: usize, used: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let n = current.len();
        if i == n {
            if used == k {
                out.push(current.clone());
            }
            return;
        }
        if k - used > n - i {
            return;
        }
        for label in 0..=used.min(k - 1) {
            current[i] = label;
            grow(i + 1, used.max(label + 1), k, current, out);
        }
    }
    grow(1, 1, num_blocks, &mut current, &mut maps);
    for blocks in maps {
        let groups = districts_of(&blocks, num_blocks);
        if groups
            .iter()
            .any(|g| g.len() < min_block || g.len() > max_block || !connected(g, h.base().edges()))
        {
            continue;
        }
        let candidate = Hierarchy::build(h.base().clone(), std::slice::from_ref(&blocks))
            .expect("blocks are connected");
        let law = exact_law(&candidate, params, limits)?;
        out.push(HierarchyLaw { blocks, law });
    }
    Ok(out)
}
