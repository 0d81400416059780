use std::fs;
use std::path::Path;

use clap::Parser;
use msms::cli::{execute, table_path, Cli, CliError};
use msms::engine::DiagnosticsError;
use msms::fixtures::{four_cycle_two_blocks, grid_graph, grid_with_blocks, triangle};
use msms::io::{read_samples, write_graph, GraphFile};
use msms::{BaseGraph, ConfigError, Hierarchy};

fn run(args: &[&str]) -> Result<String, CliError> {
    let mut out = Vec::new();
    let cli = Cli::parse_from(std::iter::once("msms").chain(args.iter().copied()));
    execute(cli, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn graph_with_votes(dir: &Path) -> std::path::PathBuf {
    let h = grid_with_blocks(4, 4, 2, 2);
    let mut file = GraphFile::from_hierarchy(&h);
    file.attributes
        .insert("a".into(), (0..16).map(|x| (x % 3) as f64).collect());
    file.attributes
        .insert("b".into(), (0..16).map(|x| (x % 2) as f64 + 0.5).collect());
    let path = dir.join("graph.json");
    write_graph(&path, &file).unwrap();
    path
}

fn write_manifest(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

fn save(dir: &Path, name: &str, h: &Hierarchy) -> String {
    let path = dir.join(name);
    write_graph(&path, &GraphFile::from_hierarchy(h)).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn count_trees_on_the_triangle_prints_three() {
    let dir = tempfile::tempdir().unwrap();
    let g = save(dir.path(), "t.json", &Hierarchy::flat(triangle()));
    let out = run(&["count-trees", &g]).unwrap();
    assert!(out.contains("tau 3\n"), "{out}");
}

#[test]
fn count_trees_on_the_two_block_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let g = save(dir.path(), "c.json", &four_cycle_two_blocks());
    let out = run(&["count-trees", &g]).unwrap();
    assert_eq!(out, "tau 4\ntau_h 2\n");
}

#[test]
fn count_trees_on_the_three_by_three_grid() {
    let dir = tempfile::tempdir().unwrap();
    let g = save(dir.path(), "g.json", &Hierarchy::flat(grid_graph(3, 3)));
    assert_eq!(run(&["count-trees", &g]).unwrap(), "tau 192\ntau_h 192\n");
}

#[test]
fn disconnected_graph_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let file = GraphFile {
        population: vec![1; 4],
        edges: vec![(0, 1), (2, 3)],
        names: vec![],
        attributes: Default::default(),
        oriented: None,
        levels: vec![],
    };
    let path = dir.path().join("d.json");
    write_graph(&path, &file).unwrap();
    assert!(BaseGraph::new(vec![1; 4], vec![(0, 1), (2, 3)]).is_err());
    assert!(run(&["count-trees", path.to_str().unwrap()]).is_err());
}

#[test]
fn sample_writes_one_row_per_record() {
    let dir = tempfile::tempdir().unwrap();
    graph_with_votes(dir.path());
    let manifest = write_manifest(
        dir.path(),
        r#"
        graph = "graph.json"
        output_dir = "out"
        [measure]
        num_districts = 2
        [chains]
        count = 1
        steps = 100
        record_every = 10
        observables = ["a", "b"]
        "#,
    );
    run(&["--threads", "1", "sample", manifest.to_str().unwrap()]).unwrap();
    let out = dir.path().join("out");
    let (schema, records) = read_samples(fs::File::open(table_path(&out, 0)).unwrap()).unwrap();
    assert_eq!(schema.observables, vec!["a", "b"]);
    // the initial record plus one per ten proposals
    assert_eq!(records.len(), 11);
    assert_eq!(records.last().unwrap().step, 100);
    assert!(out.join("chain_0.snapshot.json").is_file());
    assert!(out.join("summary.json").is_file());
}

#[test]
fn sampling_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    graph_with_votes(dir.path());
    let body = |out: &str| {
        format!(
            r#"
            graph = "graph.json"
            output_dir = "{out}"
            [measure]
            num_districts = 2
            [chains]
            count = 3
            steps = 200
            seed = 9
            observables = ["a", "b"]
            "#
        )
    };
    let m1 = dir.path().join("one.toml");
    fs::write(&m1, body("one")).unwrap();
    let m2 = dir.path().join("many.toml");
    fs::write(&m2, body("many")).unwrap();
    run(&["--threads", "1", "sample", m1.to_str().unwrap()]).unwrap();
    run(&["--threads", "3", "sample", m2.to_str().unwrap()]).unwrap();
    for i in 0..3 {
        let a = fs::read(table_path(&dir.path().join("one"), i)).unwrap();
        let b = fs::read(table_path(&dir.path().join("many"), i)).unwrap();
        assert_eq!(a, b, "chain {i}");
    }
}

#[test]
fn diagnose_identical_tables_gives_zero_tv() {
    let dir = tempfile::tempdir().unwrap();
    graph_with_votes(dir.path());
    let manifest = write_manifest(
        dir.path(),
        r#"
        graph = "graph.json"
        output_dir = "out"
        [measure]
        num_districts = 2
        [chains]
        count = 1
        steps = 50
        observables = ["a", "b"]
        "#,
    );
    run(&["sample", manifest.to_str().unwrap()]).unwrap();
    let t = table_path(&dir.path().join("out"), 0);
    let t = t.to_str().unwrap();
    let report = dir.path().join("report");
    let out = run(&[
        "diagnose",
        "--a",
        "a",
        "--b",
        "b",
        "--out",
        report.to_str().unwrap(),
        t,
        t,
    ])
    .unwrap();
    assert!(out.contains("max pairwise seat TV 0.000000"), "{out}");
    assert!(out.contains("max pairwise marginal TV 0.000000"), "{out}");
    for f in [
        "report.json",
        "tv_curve.csv",
        "seat_histograms.csv",
        "marginals.csv",
    ] {
        assert!(report.join(f).is_file(), "{f}");
    }
}

#[test]
fn diagnose_needs_two_tables() {
    let dir = tempfile::tempdir().unwrap();
    graph_with_votes(dir.path());
    let manifest = write_manifest(
        dir.path(),
        "graph = \"graph.json\"\noutput_dir = \"out\"\n[chains]\nsteps = 5\nobservables = [\"a\", \"b\"]\n",
    );
    run(&["sample", manifest.to_str().unwrap()]).unwrap();
    let t = table_path(&dir.path().join("out"), 0);
    let err = run(&["diagnose", "--a", "a", "--b", "b", t.to_str().unwrap()]).unwrap_err();
    assert!(matches!(
        err,
        CliError::Diagnostics(DiagnosticsError::InsufficientChains(1))
    ));
}

#[test]
fn spanning_links_with_positive_gamma_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    graph_with_votes(dir.path());
    let manifest = write_manifest(
        dir.path(),
        r#"
        graph = "graph.json"
        [measure]
        gamma = 1.0
        link_scheme = "fixed-count-strict"
        allow_spanning_links = true
        "#,
    );
    let err = run(&["sample", manifest.to_str().unwrap()]).unwrap_err();
    assert!(matches!(
        err,
        CliError::Config(ConfigError::SpanningLinksNeedGammaZero)
    ));
    assert!(err.to_string().contains("gamma = 0"));
}

#[test]
fn oracle_lists_the_path_partition() {
    let dir = tempfile::tempdir().unwrap();
    save(
        dir.path(),
        "graph.json",
        &Hierarchy::flat(msms::fixtures::path_graph(4)),
    );
    let manifest = write_manifest(
        dir.path(),
        "graph = \"graph.json\"\n[measure]\nnum_districts = 2\n",
    );
    let out = run(&["oracle", manifest.to_str().unwrap()]).unwrap();
    assert_eq!(
        out,
        "assignment,trees,links,probability\n0 0 1 1,1,1,1.000000000000\n"
    );
}

#[test]
fn seed_writes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    graph_with_votes(dir.path());
    let manifest = write_manifest(
        dir.path(),
        "graph = \"graph.json\"\noutput_dir = \"seeds\"\n[measure]\nnum_districts = 4\n",
    );
    let out = run(&["seed", "--count", "2", manifest.to_str().unwrap()]).unwrap();
    assert_eq!(out.lines().count(), 2);
    let snap = dir.path().join("seeds").join("seed_1.json");
    let counted = run(&[
        "count-trees",
        dir.path().join("graph.json").to_str().unwrap(),
        "--snapshot",
        snap.to_str().unwrap(),
    ])
    .unwrap();
    assert_eq!(counted.lines().count(), 4);
}
