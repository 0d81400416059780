use std::collections::BTreeMap;

use msms::engine::{
    chain_rng, is_non_increasing, moving_average3, seed_plan, total_variation, Chain, ChainConfig,
    Histogram, SeedConfig,
};
use msms::fixtures::{grid_graph, grid_with_blocks, nested_grid};
use msms::measure::{log_density, MeasureParams};
use msms::oracle::canonical_labels;
use msms::state::{Partition, PlanState};
use msms::tree::{count_spanning_trees, log_spanning_trees, wilson_edges, TreeCountCache};
use msms::{Hierarchy, Multigraph};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn same_caches(h: &Hierarchy, a: &Partition, b: &Partition) -> Result<(), TestCaseError> {
    prop_assert_eq!(a.assignment(), b.assignment());
    prop_assert_eq!(a.district_pops(), b.district_pops());
    prop_assert_eq!(a.cut_edge_count(), b.cut_edge_count());
    for n in 1..=h.levels() {
        prop_assert_eq!(a.split_nodes(n), b.split_nodes(n));
        for v in 0..h.size(n) {
            let sorted = |p: &Partition| {
                let mut o = p.occupants(n, v).to_vec();
                o.sort_by_key(|o| o.district);
                o
            };
            prop_assert_eq!(sorted(a), sorted(b));
        }
    }
    let pairs_a: Vec<_> = a.sharing_pairs().collect();
    let pairs_b: Vec<_> = b.sharing_pairs().collect();
    prop_assert_eq!(pairs_a, pairs_b);
    Ok(())
}

fn histogram(values: &[u8]) -> Histogram {
    let mut h = Histogram::new();
    for &v in values {
        *h.entry(i64::from(v % 8)).or_default() += 1;
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reassign_keeps_caches_equal_to_a_fresh_build(
        seed in any::<u64>(),
        moves in prop::collection::vec((0usize..64, 0usize..3), 1..20),
    ) {
        let h = nested_grid(8, 8, &[(2, 2), (2, 2)]);
        let mut rng = chain_rng(seed, 0);
        let initial: Vec<usize> = (0..64).map(|_| rng.gen_range(0..3)).collect();
        let mut p = Partition::new(&h, initial, 3).unwrap();
        p.reassign(&h, &moves);
        prop_assert!(p.check_consistency(&h).is_ok());
        let fresh = Partition::new(&h, p.assignment().to_vec(), 3).unwrap();
        same_caches(&h, &p, &fresh)?;
    }

    #[test]
    fn total_variation_is_a_bounded_symmetric_distance(
        a in prop::collection::vec(any::<u8>(), 1..40),
        b in prop::collection::vec(any::<u8>(), 1..40),
    ) {
        let (p, q) = (histogram(&a), histogram(&b));
        let tv = total_variation(&p, &q);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&tv));
        prop_assert!((tv - total_variation(&q, &p)).abs() < 1e-12);
        prop_assert!(total_variation(&p, &p).abs() < 1e-12);
    }

    #[test]
    fn moving_average_of_a_decreasing_curve_is_non_increasing(
        mut values in prop::collection::vec(0.0f64..1.0, 3..20),
    ) {
        values.sort_by(|x, y| y.total_cmp(x));
        let smoothed = moving_average3(&values);
        prop_assert!(is_non_increasing(&smoothed));
    }

    #[test]
    fn canonical_labels_ignore_district_names(
        assignment in prop::collection::vec(0usize..5, 1..30),
        seed in any::<u64>(),
    ) {
        let mut names: Vec<usize> = (0..5).collect();
        names.shuffle(&mut chain_rng(seed, 0));
        let renamed: Vec<usize> = assignment.iter().map(|&d| names[d]).collect();
        let canonical = canonical_labels(&assignment);
        prop_assert_eq!(&canonical_labels(&renamed), &canonical);
        prop_assert_eq!(canonical_labels(&canonical), canonical);
    }

    #[test]
    fn exact_and_log_tree_counts_agree(
        n in 2usize..9,
        extra in prop::collection::vec((0usize..8, 0usize..8), 0..8),
        seed in any::<u64>(),
    ) {
        let mut rng = chain_rng(seed, 0);
        let mut edges: Vec<(usize, usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v, 0)).collect();
        edges.extend(extra.iter().map(|&(a, b)| (a % n, b % n, 0)).filter(|(a, b, _)| a != b));
        for (i, e) in edges.iter_mut().enumerate() {
            e.2 = i;
        }
        let g = Multigraph::new((0..n).collect(), edges);
        let exact = count_spanning_trees(&g).unwrap();
        let ln_exact = exact.log_value;
        prop_assert!((ln_exact - log_spanning_trees(&g).unwrap()).abs() <= 1e-9 * ln_exact.abs().max(1.0));

        let tree = wilson_edges(&g, &mut rng).unwrap();
        prop_assert_eq!(tree.len(), n - 1);
        let sub = Multigraph::new((0..n).collect(), tree.iter().map(|&i| g.edges[i]).collect());
        prop_assert!(sub.is_connected());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn chains_stay_in_valid_states(seed in any::<u64>(), gamma in prop_oneof![Just(0.0), Just(1.0)]) {
        let h = grid_with_blocks(6, 6, 3, 3);
        let params = MeasureParams { num_districts: 4, pop_tol: 0.2, gamma, ..MeasureParams::default() };
        let state = seed_plan(&h, &params, &SeedConfig::default(), &mut chain_rng(seed, 1)).unwrap();
        let config = ChainConfig { rng_seed: seed, ..ChainConfig::default() };
        let mut chain = Chain::new(h.clone(), state, params.clone(), config).unwrap();
        for _ in 0..60 {
            chain.step().unwrap();
        }
        prop_assert!(chain.state.validate(&h, &params).is_ok());
        prop_assert!(chain.state.partition.check_consistency(&h).is_ok());
    }

    #[test]
    fn snapshots_round_trip(seed in any::<u64>()) {
        let h = grid_with_blocks(4, 4, 2, 2);
        let params = MeasureParams { num_districts: 2, ..MeasureParams::default() };
        let mut rng = chain_rng(seed, 2);
        let mut state = seed_plan(&h, &params, &SeedConfig::default(), &mut rng).unwrap();
        let owner = state.partition.occupants(1, 0)[0].district;
        state.resolve_node(&h, owner, (1, 0), &mut rng).unwrap();
        let snap = state.snapshot();
        let back = PlanState::from_snapshot(&h, &snap).unwrap();
        prop_assert_eq!(back.snapshot(), snap);
        let text = serde_json::to_string(&state.snapshot()).unwrap();
        prop_assert_eq!(serde_json::from_str::<msms::state::Snapshot>(&text).unwrap(), state.snapshot());
    }

    #[test]
    fn target_density_ignores_district_ids(seed in any::<u64>()) {
        let h = grid_with_blocks(6, 6, 3, 3);
        let params = MeasureParams { num_districts: 4, pop_tol: 0.2, gamma: 0.5, beta: 0.3, ..MeasureParams::default() };
        let mut rng = chain_rng(seed, 3);
        let state = seed_plan(&h, &params, &SeedConfig::default(), &mut rng).unwrap();
        let mut names: Vec<usize> = (0..4).collect();
        names.shuffle(&mut rng);
        let mut snap = state.snapshot();
        snap.assignment = snap.assignment.iter().map(|&d| names[d]).collect();
        let mut trees = snap.trees.clone();
        for (d, t) in snap.trees.iter().enumerate() {
            trees[names[d]] = t.clone();
        }
        snap.trees = trees;
        let renamed = PlanState::from_snapshot(&h, &snap).unwrap();
        let original = log_density(&h, &state, &params, &mut TreeCountCache::new());
        let permuted = log_density(&h, &renamed, &params, &mut TreeCountCache::new());
        prop_assert!((original - permuted).abs() < 1e-9, "{} vs {}", original, permuted);
    }
}

#[test]
fn path_and_cycle_partition_counts() {
    use msms::fixtures::{cycle_graph, path_graph};
    use msms::oracle::enumerate_partitions;
    let params = MeasureParams::default();
    assert_eq!(
        enumerate_partitions(&Hierarchy::flat(path_graph(4)), &params)
            .unwrap()
            .len(),
        1
    );
    assert_eq!(
        enumerate_partitions(&Hierarchy::flat(cycle_graph(4)), &params)
            .unwrap()
            .len(),
        2
    );
    let grid = Hierarchy::flat(grid_graph(2, 3));
    let counts: BTreeMap<usize, usize> = (2..=3)
        .map(|d| {
            let p = MeasureParams {
                num_districts: d,
                ..MeasureParams::default()
            };
            (d, enumerate_partitions(&grid, &p).unwrap().len())
        })
        .collect();
    assert_eq!(counts, BTreeMap::from([(2, 3), (3, 3)]));
}
