//! Initial plans by repeated tree cuts.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::graph::{EdgeId, Hierarchy, MaskRegion};
use crate::measure::{crossing_edges, LinkScheme, MeasureParams};
use crate::proposal::{find_cut_set, pair_link_options, CutOptions, SplitTarget};
use crate::state::{Partition, PlanState};
use crate::tree::{sample_top, MultiScaleTree};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeedError {
    #[error("no valid plan after {0} attempts")]
    Exhausted(usize),
    #[error("population bounds are empty")]
    EmptyBounds,
}

/// Settings of the seeding search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedConfig {
    pub max_attempts: usize,
    /// Spanning mode only: links added between pairs that share no node.
    pub extra_links: usize,
    /// Spanning mode only: total number of links, topping up the required
    /// ones. Takes precedence over `extra_links`.
    pub link_count: Option<usize>,
    pub exhaustive_degree: usize,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            max_attempts: 1000,
            extra_links: 0,
            link_count: None,
            exhaustive_degree: crate::proposal::cut::DEFAULT_EXHAUSTIVE_DEGREE,
        }
    }
}

/// Carves districts one at a time off the unassigned region, then draws
/// links uniformly per required pair, until the plan passes validation.
pub fn seed_plan<G: Rng + ?Sized>(
    h: &Hierarchy,
    params: &MeasureParams,
    config: &SeedConfig,
    rng: &mut G,
) -> Result<PlanState, SeedError> {
    let bounds = params.bounds(h.base().total_population());
    if bounds.lo > bounds.hi || bounds.hi == 0 {
        return Err(SeedError::EmptyBounds);
    }
    for _ in 0..config.max_attempts {
        let Some(assignment) = carve(h, params, config, rng) else {
            continue;
        };
        let Ok(partition) = Partition::new(h, assignment.clone(), params.num_districts) else {
            continue;
        };
        let Some(links) = draw_links(h, &partition, params, config, rng) else {
            continue;
        };
        let Ok(state) = PlanState::new(h, assignment, params.num_districts, links, rng) else {
            continue;
        };
        if state.validate(h, params).is_ok() {
            return Ok(state);
        }
    }
    Err(SeedError::Exhausted(config.max_attempts))
}

fn carve<G: Rng + ?Sized>(
    h: &Hierarchy,
    params: &MeasureParams,
    config: &SeedConfig,
    rng: &mut G,
) -> Option<Vec<usize>> {
    let n = h.base().num_vertices();
    let d = params.num_districts;
    let bounds = params.bounds(h.base().total_population());
    let mut assignment = vec![d - 1; n];
    let mut remaining = vec![true; n];
    let options = CutOptions {
        exhaustive_degree: config.exhaustive_degree,
        allow_top_edges: !params.cuts_inside_top_nodes(),
        allow_inner_edges: params.max_districts_per_top_node > 1,
    };
    for district in 0..d.saturating_sub(1) {
        let rest = (d - district - 1) as u64;
        let region = MaskRegion::new(h, remaining.clone());
        let mut tree = MultiScaleTree {
            top: sample_top(h, &region, rng).ok()?,
            pieces: Default::default(),
        };
        let target = SplitTarget {
            first: (bounds.lo, bounds.hi),
            second: (rest * bounds.lo, rest * bounds.hi),
        };
        let cuts =
            find_cut_set(h, &region, &mut tree, &target, &options, &mut |_| true, rng).ok()?;
        let chosen = cuts.candidates.choose(rng)?.edge;
        let (a, b) = cuts.sides(h, &region, chosen);
        let pop = |side: &[usize]| side.iter().map(|&x| h.base().population(x)).sum::<u64>();
        let fits = |side: &[usize]| (bounds.lo..=bounds.hi).contains(&pop(side));
        let carved = match (fits(&a), fits(&b)) {
            (true, true) => {
                if rng.gen() {
                    a
                } else {
                    b
                }
            }
            (true, false) => a,
            (false, true) => b,
            (false, false) => return None,
        };
        for x in carved {
            assignment[x] = district;
            remaining[x] = false;
        }
    }
    let last: Vec<usize> = (0..n).filter(|&x| remaining[x]).collect();
    let last_pop: u64 = last.iter().map(|&x| h.base().population(x)).sum();
    bounds.contains(last_pop).then_some(assignment)
}

fn draw_links<G: Rng + ?Sized>(
    h: &Hierarchy,
    p: &Partition,
    params: &MeasureParams,
    config: &SeedConfig,
    rng: &mut G,
) -> Option<BTreeSet<EdgeId>> {
    let mut links = BTreeSet::new();
    let mut required = BTreeSet::new();
    for district in 0..p.num_districts() {
        for (pair, options) in pair_link_options(h, p, params, district, district) {
            if required.insert(pair) {
                links.insert(*options.choose(rng)?);
            }
        }
    }
    if !params.allow_spanning_links || params.link_scheme != LinkScheme::FixedCountStrict {
        return Some(links);
    }
    let extra = match config.link_count {
        Some(total) => total.checked_sub(links.len())?,
        None => config.extra_links,
    };
    if extra > 0 {
        let mut free: Vec<Vec<EdgeId>> = crossing_edges(h, p)
            .into_iter()
            .filter(|(pair, _)| !required.contains(pair))
            .map(|(_, e)| e)
            .collect();
        if free.len() < extra {
            return None;
        }
        free.shuffle(rng);
        for edges in free.into_iter().take(extra) {
            links.insert(*edges.choose(rng)?);
        }
    }
    Some(links)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::chain_rng;
    use crate::fixtures::{grid_graph, grid_with_blocks};

    #[test]
    fn seeds_a_valid_grid_plan() {
        let h = Hierarchy::flat(grid_graph(4, 4));
        let params = MeasureParams {
            num_districts: 4,
            ..MeasureParams::default()
        };
        let mut rng = chain_rng(7, 0);
        let state = seed_plan(&h, &params, &SeedConfig::default(), &mut rng).unwrap();
        assert!(state.validate(&h, &params).is_ok());
        assert!(state.partition.district_pops().iter().all(|&p| p == 4));
    }

    #[test]
    fn seeds_a_two_level_plan() {
        let h = grid_with_blocks(4, 4, 2, 2);
        let params = MeasureParams {
            num_districts: 2,
            ..MeasureParams::default()
        };
        let mut rng = chain_rng(3, 1);
        let state = seed_plan(&h, &params, &SeedConfig::default(), &mut rng).unwrap();
        assert!(state.validate(&h, &params).is_ok());
    }

    #[test]
    fn infeasible_targets_exhaust() {
        let h = Hierarchy::flat(grid_graph(1, 3));
        let params = MeasureParams {
            num_districts: 2,
            ..MeasureParams::default()
        };
        let config = SeedConfig {
            max_attempts: 20,
            ..SeedConfig::default()
        };
        let err = seed_plan(&h, &params, &config, &mut chain_rng(1, 0)).unwrap_err();
        assert_eq!(err, SeedError::Exhausted(20));
    }

    #[test]
    fn spanning_mode_tops_links_up_to_the_requested_count() {
        let h = Hierarchy::flat(grid_graph(4, 4));
        let params = MeasureParams {
            num_districts: 4,
            link_scheme: LinkScheme::FixedCountStrict,
            allow_spanning_links: true,
            ..MeasureParams::default()
        };
        let config = SeedConfig {
            link_count: Some(3),
            ..SeedConfig::default()
        };
        let state = seed_plan(&h, &params, &config, &mut chain_rng(5, 0)).unwrap();
        assert_eq!(state.links.len(), 3);
        assert!(state.validate(&h, &params).is_ok());
    }
}
