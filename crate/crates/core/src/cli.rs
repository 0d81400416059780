//! Command-line front end: argument parsing and the subcommands.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{Mode, RunManifest};
use crate::engine::{
    chain_rng, diagnose, seed_plan, Chain, ChainSeries, ChainStats, DiagnosticsConfig,
    DiagnosticsError, DiagnosticsReport, SeedError,
};
use crate::error::{ConfigError, GraphError, ProposalError, TreeError};
use crate::graph::{Hierarchy, MaskRegion, Multigraph};
use crate::io::{self, IoError, SampleSchema, SampleWriter};
use crate::oracle::{exact_law, OracleError, OracleLimits};
use crate::state::PlanState;
use crate::tree::{count_hierarchical_trees, count_spanning_trees};

/// Seeding draws from streams above this offset so they never overlap the
/// chains' own streams.
const SEED_STREAM_OFFSET: u64 = 1 << 32;

#[derive(Debug, Parser)]
#[command(
    name = "msms",
    version,
    about = "Multi-scale merge-split sampler for graph partitions"
)]
pub struct Cli {
    /// Worker threads for chain fan-out (0 = one per core).
    #[arg(long, env = "MSMS_THREADS", global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Runs the subcommand named by the manifest's `mode`.
    Run { manifest: PathBuf },
    /// Runs every chain of the manifest and writes sample tables and final snapshots.
    Sample { manifest: PathBuf },
    /// Writes seed plans as snapshots.
    Seed {
        manifest: PathBuf,
        /// Number of plans (defaults to the chain count).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Compares two or more sample tables.
    Diagnose {
        /// Observable counted as the winner of a district.
        #[arg(long)]
        a: String,
        /// Observable it is compared against.
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 0.002)]
        bin_width: f64,
        #[arg(long, default_value_t = 0)]
        burn_in: u64,
        /// Directory for the report files; only a summary is printed without it.
        #[arg(long)]
        out: Option<PathBuf>,
        tables: Vec<PathBuf>,
    },
    /// Prints the exact partition law of a small instance.
    Oracle {
        manifest: PathBuf,
        /// Exact link-set size when links may join pairs sharing no node.
        #[arg(long)]
        link_set_size: Option<usize>,
    },
    /// Prints spanning-tree and hierarchical-tree counts.
    CountTrees {
        graph: PathBuf,
        /// Snapshot whose districts are counted one by one.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error(transparent)]
    Proposal(#[from] ProposalError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("thread pool: {0}")]
    Threads(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

/// Executes a parsed command line, printing summaries to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Run { manifest } => {
            let m = RunManifest::load(&manifest)?;
            match m.mode {
                Mode::Sample => cmd_sample(&m, cli.threads, out),
                Mode::Seed => cmd_seed(&m, None, out),
                Mode::Diagnose => {
                    let cfg = m.diagnose.stats.clone();
                    let dir = Some(m.output_dir.clone());
                    cmd_diagnose(
                        &m.diagnose.tables,
                        &m.diagnose.a,
                        &m.diagnose.b,
                        &cfg,
                        dir.as_deref(),
                        out,
                    )
                }
                Mode::Oracle => cmd_oracle(&m, None, out),
                Mode::CountTrees => cmd_count_trees(&m.graph, m.assignment.as_deref(), out),
            }
        }
        Command::Sample { manifest } => {
            cmd_sample(&RunManifest::load(&manifest)?, cli.threads, out)
        }
        Command::Seed { manifest, count } => cmd_seed(&RunManifest::load(&manifest)?, count, out),
        Command::Diagnose {
            a,
            b,
            bin_width,
            burn_in,
            out: dir,
            tables,
        } => {
            let cfg = DiagnosticsConfig {
                bin_width,
                burn_in,
                ..DiagnosticsConfig::default()
            };
            cmd_diagnose(&tables, &a, &b, &cfg, dir.as_deref(), out)
        }
        Command::Oracle {
            manifest,
            link_set_size,
        } => cmd_oracle(&RunManifest::load(&manifest)?, link_set_size, out),
        Command::CountTrees { graph, snapshot } => {
            cmd_count_trees(&graph, snapshot.as_deref(), out)
        }
    }
}

fn load_hierarchy(m: &RunManifest) -> Result<Hierarchy, CliError> {
    let file = io::read_graph(&m.graph)?;
    if let Some(names) = &m.level_names {
        if *names != file.level_names() {
            return Err(ConfigError::Other(format!(
                "level names {:?} do not match the graph file's {:?}",
                names,
                file.level_names()
            ))
            .into());
        }
    }
    Ok(file.to_hierarchy()?)
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Threads(e.to_string()))
}

pub fn table_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("chain_{chain}.csv"))
}

pub fn snapshot_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("chain_{chain}.snapshot.json"))
}

fn initial_state(
    m: &RunManifest,
    h: &Hierarchy,
    chain: usize,
) -> Result<(Hierarchy, PlanState), CliError> {
    if let Some(path) = m.chains.initial.get(chain) {
        let (moved, state) = io::read_snapshot(path, h)?;
        return Ok((moved.unwrap_or_else(|| h.clone()), state));
    }
    let mut rng = chain_rng(m.chains.seed, SEED_STREAM_OFFSET + chain as u64);
    Ok((
        h.clone(),
        seed_plan(h, &m.measure, &m.seed_config(), &mut rng)?,
    ))
}

fn run_chain(m: &RunManifest, h: &Hierarchy, chain: usize) -> Result<ChainStats, CliError> {
    let (h, state) = initial_state(m, h, chain)?;
    let mut runner = Chain::new(h, state, m.measure.clone(), m.chains.chain_config(chain)?)?;
    let schema = SampleSchema {
        districts: m.measure.num_districts,
        observables: m.chains.observables.clone(),
    };
    let mut writer = SampleWriter::new(
        BufWriter::new(io::create(&table_path(&m.output_dir, chain))?),
        schema,
    )?;
    let mut failure = None;
    let stats = runner.run(|r| {
        if failure.is_none() {
            failure = writer.write(r).err();
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    writer.finish()?.flush()?;
    let moved = (m.chains.mix.hierarchy > 0.0).then_some(&runner.hierarchy);
    io::write_snapshot(&snapshot_path(&m.output_dir, chain), &runner.state, moved)?;
    Ok(stats)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    chains: &'a [ChainStats],
}

pub fn cmd_sample(
    m: &RunManifest,
    threads: Option<usize>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    m.validate()?;
    let h = load_hierarchy(m)?;
    fs::create_dir_all(&m.output_dir)?;
    let threads = threads.or(m.threads);
    let results: Vec<Result<ChainStats, CliError>> = pool(threads)?.install(|| {
        (0..m.chains.count)
            .into_par_iter()
            .map(|i| run_chain(m, &h, i))
            .collect()
    });
    let stats = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    serde_json::to_writer_pretty(
        io::create(&m.output_dir.join("summary.json"))?,
        &RunSummary { chains: &stats },
    )?;
    for (i, s) in stats.iter().enumerate() {
        writeln!(
            out,
            "chain {i}: {} proposals, {} accepted, {} rejected, {} aborted",
            s.proposals, s.accepted, s.rejected, s.aborted
        )?;
    }
    if !m.diagnose.a.is_empty() && m.chains.count >= 2 {
        let tables: Vec<PathBuf> = (0..m.chains.count)
            .map(|i| table_path(&m.output_dir, i))
            .collect();
        cmd_diagnose(
            &tables,
            &m.diagnose.a,
            &m.diagnose.b,
            &m.diagnose.stats,
            Some(&m.output_dir),
            out,
        )?;
    }
    Ok(())
}

pub fn cmd_seed(
    m: &RunManifest,
    count: Option<usize>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    m.measure.validate()?;
    let h = load_hierarchy(m)?;
    fs::create_dir_all(&m.output_dir)?;
    for i in 0..count.unwrap_or(m.chains.count) {
        let mut rng = chain_rng(m.chains.seed, SEED_STREAM_OFFSET + i as u64);
        let state = seed_plan(&h, &m.measure, &m.seed_config(), &mut rng)?;
        let path = m.output_dir.join(format!("seed_{i}.json"));
        io::write_snapshot(&path, &state, None)?;
        writeln!(out, "{}", path.display())?;
    }
    Ok(())
}

/// Loads tables, checks they share one schema and computes the report.
pub fn diagnose_tables(
    tables: &[PathBuf],
    a: &str,
    b: &str,
    config: &DiagnosticsConfig,
) -> Result<DiagnosticsReport, CliError> {
    let mut schema: Option<SampleSchema> = None;
    let mut series = Vec::with_capacity(tables.len());
    for path in tables {
        let (s, records) = io::read_samples(io::open(path)?)?;
        if schema.as_ref().is_some_and(|first| *first != s) {
            return Err(
                IoError::Schema(format!("{} has different columns", path.display())).into(),
            );
        }
        let index = |name: &str| {
            s.observables.iter().position(|o| o == name).ok_or_else(|| {
                IoError::Schema(format!("{} has no observable {name:?}", path.display()))
            })
        };
        series.push(ChainSeries::from_records(&records, index(a)?, index(b)?)?);
        schema = Some(s);
    }
    Ok(diagnose(&series, config)?)
}

fn write_report_files(
    dir: &Path,
    report: &DiagnosticsReport,
    bin_width: f64,
) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    serde_json::to_writer_pretty(io::create(&dir.join("report.json"))?, report)?;

    let mut curve = csv::Writer::from_writer(io::create(&dir.join("tv_curve.csv"))?);
    curve.write_record([
        "proposals",
        "max_pairwise_seat_tv",
        "max_vs_all_seat_tv",
        "max_pairwise_marginal_tv",
    ])?;
    for r in &report.curve {
        curve.serialize((
            r.proposals,
            r.max_pairwise_seat_tv,
            r.max_vs_all_seat_tv,
            r.max_pairwise_marginal_tv,
        ))?;
    }
    curve.flush()?;

    let mut seats = csv::Writer::from_writer(io::create(&dir.join("seat_histograms.csv"))?);
    seats.write_record(["chain", "seats", "count"])?;
    for (chain, h) in report.seat_histograms.iter().enumerate() {
        for (&k, &c) in h {
            seats.serialize((chain, k, c))?;
        }
    }
    seats.flush()?;

    let mut marginals = csv::Writer::from_writer(io::create(&dir.join("marginals.csv"))?);
    marginals.write_record(["rank", "share_lo", "count"])?;
    for (rank, h) in report.pooled_marginals.iter().enumerate() {
        for (&bin, &c) in h {
            marginals.serialize((rank, bin as f64 * bin_width, c))?;
        }
    }
    marginals.flush()?;
    Ok(())
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

pub fn cmd_diagnose(
    tables: &[PathBuf],
    a: &str,
    b: &str,
    config: &DiagnosticsConfig,
    dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let report = diagnose_tables(tables, a, b, config)?;
    writeln!(out, "chains {}", report.chains)?;
    writeln!(
        out,
        "max pairwise seat TV {:.6}",
        report.max_pairwise_seat_tv
    )?;
    writeln!(out, "max vs-all seat TV {:.6}", report.max_vs_all_seat_tv)?;
    writeln!(
        out,
        "max pairwise marginal TV {:.6}",
        report.max_pairwise_marginal_tv
    )?;
    if let Some(fit) = report.seat_order {
        writeln!(
            out,
            "seat TV order {:.4} (R^2 {:.4})",
            fit.order(),
            fit.r_squared
        )?;
    }
    if let Some(fit) = report.marginal_order {
        writeln!(
            out,
            "marginal TV order {:.4} (R^2 {:.4})",
            fit.order(),
            fit.r_squared
        )?;
    }
    if let Some(dir) = dir {
        write_report_files(dir, &report, config.bin_width)?;
    }
    Ok(())
}

pub fn cmd_oracle(
    m: &RunManifest,
    link_set_size: Option<usize>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    m.measure.validate()?;
    let h = load_hierarchy(m)?;
    let limits = OracleLimits {
        link_set_size,
        ..OracleLimits::default()
    };
    let law = exact_law(&h, &m.measure, limits)?;
    writeln!(out, "assignment,trees,links,probability")?;
    let probs = law.probabilities();
    for s in &law.states {
        let labels: Vec<String> = s.assignment.iter().map(usize::to_string).collect();
        writeln!(
            out,
            "{},{},{},{:.12}",
            labels.join(" "),
            s.trees,
            s.links,
            probs[&s.assignment]
        )?;
    }
    Ok(())
}

pub fn cmd_count_trees(
    graph: &Path,
    snapshot: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let h = io::read_graph(graph)?.to_hierarchy()?;
    match snapshot {
        None => {
            let tau = count_spanning_trees(&h.quotient_graph(0)?)?;
            let tau_h = count_hierarchical_trees(&h, &MaskRegion::whole(&h))?;
            writeln!(out, "tau {tau}")?;
            writeln!(out, "tau_h {tau_h}")?;
        }
        Some(path) => {
            let (moved, state) = io::read_snapshot(path, &h)?;
            let h = moved.as_ref().unwrap_or(&h);
            for d in 0..state.num_districts() {
                let region = MaskRegion::from_vertices(h, state.partition.district_vertices(d));
                let tau = count_spanning_trees(&induced(h, &state.partition.district_vertices(d)))?;
                let tau_h = count_hierarchical_trees(h, &region)?;
                writeln!(out, "district {d}: tau {tau} tau_h {tau_h}")?;
            }
        }
    }
    Ok(())
}

fn induced(h: &Hierarchy, vertices: &[usize]) -> Multigraph {
    let inside: BTreeSet<usize> = vertices.iter().copied().collect();
    let edges = h
        .base()
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, (x, y))| inside.contains(x) && inside.contains(y))
        .map(|(e, &(x, y))| (x, y, e));
    Multigraph::from_labelled(vertices.to_vec(), edges)
}
