//! Chain state: one multi-scale tree per district plus the linking edges.

mod partition;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub(crate) use partition::ordered;
pub use partition::{Districts, Occupant, Partition};

use crate::error::StateError;
use crate::graph::{EdgeId, Hierarchy, Multigraph, NodeKey, Region};
use crate::measure::{
    check_partition, crossing_edges, pair_required, Infeasibility, LinkScheme, MeasureParams,
};
use crate::tree::{sample_piece, sample_top, MultiScaleTree};

/// Markov chain state: a lazily resolved hierarchical forest over the
/// districts of a partition together with its linking edges.
#[derive(Debug, Clone)]
pub struct PlanState {
    pub partition: Partition,
    pub forest: Vec<MultiScaleTree>,
    pub links: BTreeSet<EdgeId>,
}

/// First broken invariant found by [`PlanState::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Cache(String),
    ForestSize { expected: usize, got: usize },
    BadTree { district: usize, detail: String },
    LinkInsideDistrict(EdgeId),
    DuplicateLink((usize, usize)),
    MisplacedLink(EdgeId),
    MissingLink((usize, usize)),
    UnexpectedLink(EdgeId),
    Constraint(Infeasibility),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cache(s) => write!(f, "cache: {s}"),
            Violation::ForestSize { expected, got } => {
                write!(f, "forest has {got} trees, expected {expected}")
            }
            Violation::BadTree { district, detail } => {
                write!(f, "tree of district {district}: {detail}")
            }
            Violation::LinkInsideDistrict(e) => write!(f, "link {e} lies inside one district"),
            Violation::DuplicateLink((a, b)) => {
                write!(f, "duplicate link between districts {a} and {b}")
            }
            Violation::MisplacedLink(e) => {
                write!(f, "link {e} is not inside the finest shared node")
            }
            Violation::MissingLink((a, b)) => write!(f, "districts {a} and {b} have no link"),
            Violation::UnexpectedLink(e) => {
                write!(f, "link {e} joins a pair the scheme does not link")
            }
            Violation::Constraint(c) => write!(f, "{c}"),
        }
    }
}

impl PlanState {
    /// Builds a state with freshly drawn top-level trees and nothing else
    /// resolved.
    pub fn new<R: Rng + ?Sized>(
        h: &Hierarchy,
        assignment: Vec<usize>,
        num_districts: usize,
        links: BTreeSet<EdgeId>,
        rng: &mut R,
    ) -> Result<Self, StateError> {
        let partition = Partition::new(h, assignment, num_districts)?;
        let mut forest = Vec::with_capacity(num_districts);
        for d in 0..num_districts {
            forest.push(MultiScaleTree {
                top: sample_top(h, &partition.region(h, d), rng)?,
                pieces: BTreeMap::new(),
            });
        }
        Ok(PlanState {
            partition,
            forest,
            links,
        })
    }

    /// `ξ(T)`: the district of every base vertex.
    pub fn induced_partition(&self) -> &[usize] {
        self.partition.assignment()
    }

    pub fn num_districts(&self) -> usize {
        self.partition.num_districts()
    }

    /// The district pair joined by a base edge.
    pub fn link_pair(&self, h: &Hierarchy, e: EdgeId) -> (usize, usize) {
        let (x, y) = h.base().edge(e);
        ordered(self.partition.district_of(x), self.partition.district_of(y))
    }

    /// Draws the tree inside `key ∩ district` and records it.
    pub fn resolve_node<R: Rng + ?Sized>(
        &mut self,
        h: &Hierarchy,
        district: usize,
        key: NodeKey,
        rng: &mut R,
    ) -> Result<&[EdgeId], StateError> {
        if district >= self.num_districts() {
            return Err(StateError::BadDistrict(district));
        }
        if self.forest[district].is_resolved(key) {
            return Err(StateError::AlreadyResolved {
                district,
                level: key.0,
                node: key.1,
            });
        }
        if key.0 == 0 || key.0 > h.levels() || !self.partition.touches(key.0, key.1, district) {
            return Err(StateError::NotInDistrict {
                district,
                level: key.0,
                node: key.1,
            });
        }
        let piece = sample_piece(h, key, &self.partition.region(h, district), rng)?;
        Ok(self.forest[district].pieces.entry(key).or_insert(piece))
    }

    /// Checks every structural invariant and the hard constraints.
    pub fn validate(&self, h: &Hierarchy, params: &MeasureParams) -> Result<(), Violation> {
        let p = &self.partition;
        p.check_consistency(h).map_err(Violation::Cache)?;
        if self.forest.len() != p.num_districts() {
            return Err(Violation::ForestSize {
                expected: p.num_districts(),
                got: self.forest.len(),
            });
        }
        check_partition(h, p, params).map_err(Violation::Constraint)?;
        for (d, tree) in self.forest.iter().enumerate() {
            check_tree(h, &p.region(h, d), tree).map_err(|detail| Violation::BadTree {
                district: d,
                detail,
            })?;
        }
        self.check_links(h, params)
    }

    fn check_links(&self, h: &Hierarchy, params: &MeasureParams) -> Result<(), Violation> {
        check_link_set(h, &self.partition, &self.links, params)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            num_districts: self.num_districts(),
            assignment: self.partition.assignment().to_vec(),
            links: self.links.iter().copied().collect(),
            trees: self
                .forest
                .iter()
                .map(|t| TreeSnapshot {
                    top: t.top.clone(),
                    pieces: t
                        .pieces
                        .iter()
                        .map(|(&(level, node), edges)| PieceSnapshot {
                            level,
                            node,
                            edges: edges.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(h: &Hierarchy, snap: &Snapshot) -> Result<Self, StateError> {
        let partition = Partition::new(h, snap.assignment.clone(), snap.num_districts)?;
        if snap.trees.len() != snap.num_districts {
            return Err(StateError::Invalid(format!(
                "snapshot has {} trees for {} districts",
                snap.trees.len(),
                snap.num_districts
            )));
        }
        let forest = snap
            .trees
            .iter()
            .map(|t| MultiScaleTree {
                top: t.top.clone(),
                pieces: t
                    .pieces
                    .iter()
                    .map(|p| ((p.level, p.node), p.edges.clone()))
                    .collect(),
            })
            .collect();
        Ok(PlanState {
            partition,
            forest,
            links: snap.links.iter().copied().collect(),
        })
    }
}

/// Checks that a link set fits a partition: at most one link per pair,
/// links inside the finest shared node, every required pair linked.
pub fn check_link_set(
    h: &Hierarchy,
    p: &Partition,
    links: &BTreeSet<EdgeId>,
    params: &MeasureParams,
) -> Result<(), Violation> {
    let mut linked = BTreeSet::new();
    for &e in links {
        let (x, y) = h.base().edge(e);
        let pair = ordered(p.district_of(x), p.district_of(y));
        if pair.0 == pair.1 {
            return Err(Violation::LinkInsideDistrict(e));
        }
        if !linked.insert(pair) {
            return Err(Violation::DuplicateLink(pair));
        }
        if let Some((n, v)) = p.finest_shared(pair.0, pair.1) {
            if h.ancestor(n, x) != v || h.ancestor(n, y) != v {
                return Err(Violation::MisplacedLink(e));
            }
        } else if params.link_scheme == LinkScheme::FixedCountStrict && !params.allow_spanning_links
        {
            return Err(Violation::UnexpectedLink(e));
        }
    }
    for &pair in crossing_edges(h, p).keys() {
        if pair_required(p, pair, true, params) && !linked.contains(&pair) {
            return Err(Violation::MissingLink(pair));
        }
    }
    Ok(())
}

/// Checks that `tree` is a (partially resolved) hierarchical tree of the
/// region.
pub fn check_tree<R: Region + ?Sized>(
    h: &Hierarchy,
    region: &R,
    tree: &MultiScaleTree,
) -> Result<(), String> {
    let top = h.region_top(region);
    check_spanning(&top, &tree.top).map_err(|s| format!("top tree: {s}"))?;
    for (&(n, v), edges) in &tree.pieces {
        if n == 0 || n > h.levels() || region.share(n, v).is_none() {
            return Err(format!("piece ({n}, {v}) is outside the district"));
        }
        let g = h.region_piece(n, v, region);
        check_spanning(&g, edges).map_err(|s| format!("piece ({n}, {v}): {s}"))?;
    }
    Ok(())
}

fn check_spanning(g: &Multigraph, edges: &[EdgeId]) -> Result<(), String> {
    let available: BTreeMap<EdgeId, (usize, usize)> =
        g.edges.iter().map(|&(a, b, e)| (e, (a, b))).collect();
    if edges.len() + 1 != g.num_vertices() {
        return Err(format!(
            "{} edges for {} vertices",
            edges.len(),
            g.num_vertices()
        ));
    }
    let mut sub = Vec::new();
    for &e in edges {
        let &(a, b) = available
            .get(&e)
            .ok_or_else(|| format!("edge {e} is not in the multigraph"))?;
        sub.push((a, b, e));
    }
    if !Multigraph::new(g.labels.clone(), sub).is_connected() {
        return Err("edges do not connect the vertices".into());
    }
    Ok(())
}

/// Serializable form of a state: the assignment, the links and every
/// resolved tree; unresolved nodes are simply absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub num_districts: usize,
    pub assignment: Vec<usize>,
    pub links: Vec<EdgeId>,
    pub trees: Vec<TreeSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub top: Vec<EdgeId>,
    pub pieces: Vec<PieceSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieceSnapshot {
    pub level: usize,
    pub node: usize,
    pub edges: Vec<EdgeId>,
}
