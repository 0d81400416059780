//! Score function, linking-edge-set counts and the target log-density.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::graph::{EdgeId, Hierarchy};
use crate::state::{ordered, Partition, PlanState};
use crate::tree::{has_hierarchical_tree, TreeCountCache};

/// Rule deciding which district pairs carry a linking edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LinkScheme {
    /// Every adjacent pair has one link; pairs sharing coarse nodes keep it
    /// inside the finest shared node.
    #[default]
    PerAdjacentPair,
    /// Only pairs sharing a split node carry a link, inside the finest
    /// shared node.
    FixedCountStrict,
}

/// Optional weighted terms added to the score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SoftTerm {
    /// Number of base edges between districts.
    CutEdges { weight: f64 },
    /// Number of top-level nodes met by two or more districts.
    SplitTopNodes { weight: f64 },
}

/// Number of tracked links under the county preset.
pub const COUNTY_PRESET_LINKS: usize = 13;

/// Parameters of the target measure and its hard constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureParams {
    pub beta: f64,
    pub gamma: f64,
    pub num_districts: usize,
    /// Allowed deviation as a fraction of the ideal population.
    pub pop_tol: f64,
    /// Overrides the rounded total/districts ideal population.
    pub pop_ideal: Option<u64>,
    pub max_split_top_nodes: Option<usize>,
    pub max_districts_per_top_node: usize,
    pub link_scheme: LinkScheme,
    /// Fixed-count-strict only: links may also join pairs that share no node.
    pub allow_spanning_links: bool,
    /// Only merge pairs sharing a top-level node (and re-split inside one).
    pub restrict_merge_to_split_pairs: bool,
    pub soft_terms: Vec<SoftTerm>,
}

impl Default for MeasureParams {
    fn default() -> Self {
        MeasureParams {
            beta: 0.0,
            gamma: 0.0,
            num_districts: 2,
            pop_tol: 0.0,
            pop_ideal: None,
            max_split_top_nodes: None,
            max_districts_per_top_node: 2,
            link_scheme: LinkScheme::PerAdjacentPair,
            allow_spanning_links: false,
            restrict_merge_to_split_pairs: false,
            soft_terms: Vec::new(),
        }
    }
}

/// Closed population interval `[lo, hi]` around the ideal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PopBounds {
    pub ideal: u64,
    pub lo: u64,
    pub hi: u64,
}

impl PopBounds {
    pub fn contains(&self, pop: u64) -> bool {
        self.lo <= pop && pop <= self.hi
    }
}

impl MeasureParams {
    /// Thirteen districts, 2% deviation, at most 13 split counties each met
    /// by at most two districts, gamma = 0, and a fixed set of tracked links
    /// (see [`COUNTY_PRESET_LINKS`]).
    pub fn county_preset() -> Self {
        MeasureParams {
            num_districts: 13,
            pop_tol: 0.02,
            max_split_top_nodes: Some(13),
            max_districts_per_top_node: 2,
            link_scheme: LinkScheme::FixedCountStrict,
            allow_spanning_links: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(ConfigError::Beta(self.beta));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ConfigError::Gamma(self.gamma));
        }
        if !self.pop_tol.is_finite() || self.pop_tol < 0.0 {
            return Err(ConfigError::PopTol(self.pop_tol));
        }
        if self.num_districts == 0 {
            return Err(ConfigError::Districts);
        }
        if !(1..=2).contains(&self.max_districts_per_top_node) {
            return Err(ConfigError::DistrictsPerNode(
                self.max_districts_per_top_node,
            ));
        }
        if self.allow_spanning_links {
            if self.link_scheme != LinkScheme::FixedCountStrict {
                return Err(ConfigError::SpanningLinksNeedStrict);
            }
            if self.gamma != 0.0 {
                return Err(ConfigError::SpanningLinksNeedGammaZero);
            }
        }
        Ok(())
    }

    pub fn bounds(&self, total_pop: u64) -> PopBounds {
        let d = self.num_districts as u64;
        let ideal = self.pop_ideal.unwrap_or((total_pop + d / 2) / d);
        let eps = (ideal as f64 * self.pop_tol).floor() as u64;
        PopBounds {
            ideal,
            lo: ideal.saturating_sub(eps),
            hi: ideal + eps,
        }
    }

    /// Whether every new pair must share a top-level node, so cuts must lie
    /// strictly inside a top node.
    pub fn cuts_inside_top_nodes(&self) -> bool {
        (self.link_scheme == LinkScheme::FixedCountStrict && !self.allow_spanning_links)
            || self.restrict_merge_to_split_pairs
    }
}

/// First hard constraint a partition violates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Infeasibility {
    Population {
        district: usize,
        pop: u64,
    },
    Disconnected(usize),
    NoHierarchicalTree(usize),
    TooManyOccupants {
        level: usize,
        node: usize,
        count: usize,
    },
    TooManySplitTopNodes(usize),
    PairSharesTwoNodes {
        pair: (usize, usize),
        level: usize,
    },
    Unlinkable((usize, usize)),
    WrongDistrictCount(usize),
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasibility::Population { district, pop } => {
                write!(f, "district {district} population {pop} out of bounds")
            }
            Infeasibility::Disconnected(d) => write!(f, "disconnected district {d}"),
            Infeasibility::NoHierarchicalTree(d) => {
                write!(f, "district {d} has no hierarchical spanning tree")
            }
            Infeasibility::TooManyOccupants { level, node, count } => {
                write!(f, "node ({level}, {node}) meets {count} districts")
            }
            Infeasibility::TooManySplitTopNodes(n) => write!(f, "{n} split top-level nodes"),
            Infeasibility::PairSharesTwoNodes { pair, level } => {
                write!(
                    f,
                    "districts {} and {} share two nodes at level {level}",
                    pair.0, pair.1
                )
            }
            Infeasibility::Unlinkable(pair) => write!(
                f,
                "districts {} and {} admit no linking edge",
                pair.0, pair.1
            ),
            Infeasibility::WrongDistrictCount(n) => write!(f, "partition has {n} districts"),
        }
    }
}

/// Score of a partition: hard constraints plus the weighted soft terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBreakdown {
    pub feasible: bool,
    /// Soft score; meaningful only when feasible.
    pub j_value: f64,
    pub terms: Vec<(String, f64)>,
    pub violation: Option<Infeasibility>,
}

fn district_connected(h: &Hierarchy, p: &Partition, d: usize) -> bool {
    let Some(start) = (0..h.size(0)).find(|&x| p.district_of(x) == d) else {
        return false;
    };
    let mut seen = vec![false; h.size(0)];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut count = 1;
    while let Some(x) = queue.pop_front() {
        for &(y, _) in h.base().neighbors(x) {
            if !seen[y] && p.district_of(y) == d {
                seen[y] = true;
                count += 1;
                queue.push_back(y);
            }
        }
    }
    count == p.district_size(d)
}

/// Structural constraints on how districts meet coarse nodes.
pub fn check_node_rules(
    h: &Hierarchy,
    p: &Partition,
    params: &MeasureParams,
) -> Result<(), Infeasibility> {
    let top = h.levels();
    for n in 1..=top {
        let limit = if n == top {
            params.max_districts_per_top_node
        } else {
            2
        };
        for &v in p.split_nodes(n) {
            let count = p.occupants(n, v).len();
            if count > limit {
                return Err(Infeasibility::TooManyOccupants {
                    level: n,
                    node: v,
                    count,
                });
            }
        }
    }
    if let Some(max) = params.max_split_top_nodes {
        let split = if top == 0 {
            0
        } else {
            p.split_nodes(top).len()
        };
        if split > max {
            return Err(Infeasibility::TooManySplitTopNodes(split));
        }
    }
    for (&pair, nodes) in p.sharing_pairs() {
        let mut levels = BTreeSet::new();
        for &(n, _) in nodes {
            if !levels.insert(n) {
                return Err(Infeasibility::PairSharesTwoNodes { pair, level: n });
            }
        }
    }
    Ok(())
}

/// All hard constraints, including the existence of a valid link set.
pub fn check_partition(
    h: &Hierarchy,
    p: &Partition,
    params: &MeasureParams,
) -> Result<(), Infeasibility> {
    if p.num_districts() != params.num_districts {
        return Err(Infeasibility::WrongDistrictCount(p.num_districts()));
    }
    let bounds = params.bounds(h.base().total_population());
    for d in 0..p.num_districts() {
        if !bounds.contains(p.district_pop(d)) {
            return Err(Infeasibility::Population {
                district: d,
                pop: p.district_pop(d),
            });
        }
    }
    for d in 0..p.num_districts() {
        if !district_connected(h, p, d) {
            return Err(Infeasibility::Disconnected(d));
        }
    }
    check_node_rules(h, p, params)?;
    for d in 0..p.num_districts() {
        if !has_hierarchical_tree(h, &p.region(h, d)) {
            return Err(Infeasibility::NoHierarchicalTree(d));
        }
    }
    for (pair, count) in link_counts(h, p, params) {
        if count == 0 {
            return Err(Infeasibility::Unlinkable(pair));
        }
    }
    Ok(())
}

/// Soft score `J` (zero with no soft terms).
pub fn soft_score(h: &Hierarchy, p: &Partition, params: &MeasureParams) -> Vec<(String, f64)> {
    params
        .soft_terms
        .iter()
        .map(|t| match *t {
            SoftTerm::CutEdges { weight } => {
                ("cut_edges".to_string(), weight * p.cut_edge_count() as f64)
            }
            SoftTerm::SplitTopNodes { weight } => {
                let n = if h.levels() == 0 {
                    0
                } else {
                    p.split_nodes(h.levels()).len()
                };
                ("split_top_nodes".to_string(), weight * n as f64)
            }
        })
        .collect()
}

pub fn score(h: &Hierarchy, p: &Partition, params: &MeasureParams) -> ScoreBreakdown {
    let terms = soft_score(h, p, params);
    let j_value = terms.iter().map(|t| t.1).sum();
    match check_partition(h, p, params) {
        Ok(()) => ScoreBreakdown {
            feasible: true,
            j_value,
            terms,
            violation: None,
        },
        Err(v) => ScoreBreakdown {
            feasible: false,
            j_value: f64::INFINITY,
            terms,
            violation: Some(v),
        },
    }
}

/// Base edges between every pair of distinct districts.
pub fn crossing_edges(h: &Hierarchy, p: &Partition) -> BTreeMap<(usize, usize), Vec<EdgeId>> {
    let mut out: BTreeMap<(usize, usize), Vec<EdgeId>> = BTreeMap::new();
    for (e, &(x, y)) in h.base().edges().iter().enumerate() {
        let (a, b) = (p.district_of(x), p.district_of(y));
        if a != b {
            out.entry(ordered(a, b)).or_default().push(e);
        }
    }
    out
}

/// Whether the pair must carry a link under the scheme.
pub fn pair_required(
    p: &Partition,
    pair: (usize, usize),
    adjacent: bool,
    params: &MeasureParams,
) -> bool {
    match params.link_scheme {
        LinkScheme::PerAdjacentPair => adjacent,
        LinkScheme::FixedCountStrict => p.shared_nodes(pair.0, pair.1).is_some(),
    }
}

/// Filters the crossing edges of a pair to those allowed to link it: the
/// ones inside the finest shared node, or all of them when nothing is shared.
pub fn allowable_from_crossing(
    h: &Hierarchy,
    p: &Partition,
    pair: (usize, usize),
    crossing: &[EdgeId],
) -> Vec<EdgeId> {
    match p.finest_shared(pair.0, pair.1) {
        Some((n, v)) => crossing
            .iter()
            .copied()
            .filter(|&e| {
                let (x, y) = h.base().edge(e);
                h.ancestor(n, x) == v && h.ancestor(n, y) == v
            })
            .collect(),
        None => crossing.to_vec(),
    }
}

/// Per-pair allowable link counts over the required pairs.
pub fn link_counts(
    h: &Hierarchy,
    p: &Partition,
    params: &MeasureParams,
) -> BTreeMap<(usize, usize), u64> {
    let crossing = crossing_edges(h, p);
    let mut out = BTreeMap::new();
    for (&pair, edges) in &crossing {
        if pair_required(p, pair, true, params) {
            out.insert(
                pair,
                allowable_from_crossing(h, p, pair, edges).len() as u64,
            );
        }
    }
    // sharing pairs that are not adjacent cannot be linked
    if params.link_scheme == LinkScheme::FixedCountStrict {
        for (&pair, _) in p.sharing_pairs() {
            out.entry(pair).or_insert(0);
        }
    }
    out
}

/// `ℒ(ξ)`: product of the per-pair counts over required pairs.
pub fn count_linking_edge_sets(h: &Hierarchy, p: &Partition, params: &MeasureParams) -> BigUint {
    link_counts(h, p, params)
        .values()
        .fold(BigUint::from(1u32), |acc, &c| acc * BigUint::from(c))
}

pub fn log_link_count(h: &Hierarchy, p: &Partition, params: &MeasureParams) -> f64 {
    link_counts(h, p, params)
        .values()
        .map(|&c| (c as f64).ln())
        .sum()
}

/// `ln P(T, L)` up to a constant: `−βJ − γ(ln τ_ℋ + ln ℒ)`, or −∞ when
/// infeasible. The tree and link terms are skipped when γ = 0.
pub fn log_density(
    h: &Hierarchy,
    state: &PlanState,
    params: &MeasureParams,
    cache: &mut TreeCountCache,
) -> f64 {
    let p = &state.partition;
    let s = score(h, p, params);
    if !s.feasible {
        return f64::NEG_INFINITY;
    }
    let mut value = if params.beta == 0.0 {
        0.0
    } else {
        -params.beta * s.j_value
    };
    if params.gamma != 0.0 {
        let mut log_tau = 0.0;
        for d in 0..p.num_districts() {
            log_tau += cache
                .log_hierarchical(h, &p.region(h, d))
                .expect("feasible districts have trees");
        }
        value -= params.gamma * (log_tau + log_link_count(h, p, params));
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn params(d: usize, tol: f64) -> MeasureParams {
        MeasureParams {
            num_districts: d,
            pop_tol: tol,
            ..MeasureParams::default()
        }
    }

    #[test]
    fn balanced_path_is_feasible() {
        let h = crate::graph::Hierarchy::flat(fixtures::path_graph(8));
        let p = Partition::new(&h, vec![0, 0, 0, 0, 1, 1, 1, 1], 2).unwrap();
        let s = score(&h, &p, &params(2, 0.0));
        assert!(s.feasible);
        assert_eq!(s.j_value, 0.0);
    }

    #[test]
    fn five_three_split_is_infeasible() {
        let h = crate::graph::Hierarchy::flat(fixtures::path_graph(8));
        let p = Partition::new(&h, vec![0, 0, 0, 0, 0, 1, 1, 1], 2).unwrap();
        let s = score(&h, &p, &params(2, 0.02));
        assert!(!s.feasible);
        assert!(matches!(
            s.violation,
            Some(Infeasibility::Population { .. })
        ));
    }

    #[test]
    fn preset_constants() {
        let p = MeasureParams::county_preset();
        assert_eq!(p.num_districts, 13);
        assert_eq!(p.pop_tol, 0.02);
        assert_eq!(p.max_split_top_nodes, Some(13));
        assert_eq!(p.max_districts_per_top_node, 2);
        assert_eq!(p.gamma, 0.0);
        assert!(p.allow_spanning_links);
        assert_eq!(p.link_scheme, LinkScheme::FixedCountStrict);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn bounds_are_closed_integer_intervals() {
        let b = params(2, 0.02).bounds(800);
        assert_eq!((b.ideal, b.lo, b.hi), (400, 392, 408));
        assert!(b.contains(392) && b.contains(408) && !b.contains(409));
    }

    #[test]
    fn spanning_links_with_gamma_are_rejected() {
        let mut p = params(2, 0.0);
        p.link_scheme = LinkScheme::FixedCountStrict;
        p.allow_spanning_links = true;
        p.gamma = 0.5;
        assert_eq!(p.validate(), Err(ConfigError::SpanningLinksNeedGammaZero));
        assert!(ConfigError::SpanningLinksNeedGammaZero
            .to_string()
            .contains("gamma = 0"));
        p.gamma = 0.0;
        assert!(p.validate().is_ok());
    }

    #[test]
    fn link_counts_confined_to_shared_node() {
        // 2×6 grid in two 2×3 blocks; district 0 takes columns 0, 1 and the
        // top of column 2, so the left block is split with two crossing
        // edges inside it and one more on the block border
        let h = fixtures::grid_with_blocks(2, 6, 2, 3);
        let col = |x: usize| x % 6;
        let row = |x: usize| x / 6;
        let assignment: Vec<usize> = (0..12)
            .map(|x| usize::from(!(col(x) < 2 || (col(x) == 2 && row(x) == 0))))
            .collect();
        let p = Partition::new(&h, assignment, 2).unwrap();
        assert_eq!(p.finest_shared(0, 1), Some((1, 0)));
        let counts = link_counts(&h, &p, &params(2, 1.0));
        let direct = h
            .base()
            .edges()
            .iter()
            .filter(|&&(x, y)| {
                p.district_of(x) != p.district_of(y)
                    && h.ancestor(1, x) == 0
                    && h.ancestor(1, y) == 0
            })
            .count() as u64;
        assert_eq!(counts[&(0, 1)], direct);
        assert_eq!(direct, 2);
        let strict = MeasureParams {
            link_scheme: LinkScheme::FixedCountStrict,
            ..params(2, 1.0)
        };
        assert_eq!(link_counts(&h, &p, &strict)[&(0, 1)], 2);
    }

    #[test]
    fn unshared_pairs_count_all_crossings_or_one() {
        let h = fixtures::grid_with_blocks(2, 6, 2, 3);
        let p = Partition::new(&h, (0..12).map(|x| usize::from(x % 6 >= 3)).collect(), 2).unwrap();
        let per_pair = params(2, 1.0);
        assert_eq!(
            count_linking_edge_sets(&h, &p, &per_pair),
            BigUint::from(2u32)
        );
        let strict = MeasureParams {
            link_scheme: LinkScheme::FixedCountStrict,
            ..per_pair
        };
        assert_eq!(
            count_linking_edge_sets(&h, &p, &strict),
            BigUint::from(1u32)
        );
    }
}
