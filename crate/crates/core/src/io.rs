//! Graph files, sample tables and state snapshots.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SampleRecord;
use crate::error::{GraphError, StateError};
use crate::graph::{BaseGraph, Hierarchy};
use crate::state::{PlanState, Snapshot};

/// First line of every sample table.
pub const SAMPLES_HEADER: &str = "# msms-samples v1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("schema mismatch: {0}")]
    Schema(String),
}

pub fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn create(path: &Path) -> Result<File, IoError> {
    File::create(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

/// One coarse level: a block label for every base vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub name: String,
    pub blocks: Vec<usize>,
    /// Clockwise neighbor lists of the blocks, indexed by dense block id
    /// (blocks numbered by first appearance in `blocks`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oriented: Option<Vec<Vec<usize>>>,
}

/// JSON graph file: base graph plus nested levels from finest to coarsest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub population: Vec<u64>,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub names: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oriented: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub levels: Vec<LevelSpec>,
}

fn dense_labels(labels: &[usize]) -> Vec<usize> {
    let mut seen = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = seen.len();
            *seen.entry(l).or_insert(next)
        })
        .collect()
}

impl GraphFile {
    pub fn level_names(&self) -> Vec<String> {
        self.levels.iter().map(|l| l.name.clone()).collect()
    }

    pub fn to_hierarchy(&self) -> Result<Hierarchy, IoError> {
        let n = self.population.len();
        let mut base = BaseGraph::new(self.population.clone(), self.edges.clone())?;
        if !self.names.is_empty() {
            base = base.with_names(self.names.clone());
        }
        for (name, values) in &self.attributes {
            base = base.with_attribute(name, values.clone())?;
        }
        if let Some(lists) = &self.oriented {
            base = base.with_oriented_neighbors(lists.clone())?;
        }
        let mut maps = Vec::with_capacity(self.levels.len());
        let mut finer: Vec<usize> = (0..n).collect();
        let mut finer_size = n;
        for (k, level) in self.levels.iter().enumerate() {
            if level.blocks.len() != n {
                return Err(GraphError::PartialMap {
                    level: k,
                    expected: n,
                    got: level.blocks.len(),
                }
                .into());
            }
            let coarse = dense_labels(&level.blocks);
            let mut map: Vec<Option<usize>> = vec![None; finer_size];
            for x in 0..n {
                match map[finer[x]] {
                    None => map[finer[x]] = Some(coarse[x]),
                    Some(b) if b != coarse[x] => {
                        return Err(IoError::Schema(format!(
                            "level {:?} does not nest in the level below",
                            level.name
                        )))
                    }
                    Some(_) => {}
                }
            }
            finer_size = coarse.iter().max().map_or(0, |&m| m + 1);
            maps.push(
                map.into_iter()
                    .map(|b| b.expect("every finer node has a vertex"))
                    .collect(),
            );
            finer = coarse;
        }
        let mut h = Hierarchy::build(base, &maps)?;
        for (k, level) in self.levels.iter().enumerate() {
            if let Some(lists) = &level.oriented {
                h = h.with_oriented_level(k + 1, lists.clone())?;
            }
        }
        Ok(h)
    }

    /// Describes an existing hierarchy (levels named `level1`, `level2`, ...).
    pub fn from_hierarchy(h: &Hierarchy) -> Self {
        let base = h.base();
        GraphFile {
            population: base.populations().to_vec(),
            edges: base.edges().to_vec(),
            names: base.names().to_vec(),
            attributes: base.attributes().clone(),
            oriented: base.oriented_neighbors().map(<[Vec<usize>]>::to_vec),
            levels: (1..=h.levels())
                .map(|k| LevelSpec {
                    name: format!("level{k}"),
                    blocks: (0..base.num_vertices()).map(|x| h.ancestor(k, x)).collect(),
                    oriented: h.oriented(k).map(<[Vec<usize>]>::to_vec),
                })
                .collect(),
        }
    }
}

pub fn read_graph(path: &Path) -> Result<GraphFile, IoError> {
    Ok(serde_json::from_reader(BufReader::new(open(path)?))?)
}

pub fn write_graph(path: &Path, graph: &GraphFile) -> Result<(), IoError> {
    serde_json::to_writer_pretty(create(path)?, graph)?;
    Ok(())
}

/// Column layout of a sample table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSchema {
    pub districts: usize,
    pub observables: Vec<String>,
}

impl SampleSchema {
    fn header(&self) -> Vec<String> {
        let mut cols = vec![
            "step".to_string(),
            "accepted".to_string(),
            "split_nodes".to_string(),
        ];
        cols.extend((0..self.districts).map(|i| format!("pop:{i}")));
        for name in &self.observables {
            cols.extend((0..self.districts).map(|i| format!("sum:{name}:{i}")));
        }
        cols.push("assignment".to_string());
        cols
    }

    fn parse(cols: &csv::StringRecord) -> Result<Self, IoError> {
        let bad = |msg: &str| IoError::Schema(msg.to_string());
        if cols.len() < 4
            || &cols[0] != "step"
            || &cols[1] != "accepted"
            || &cols[2] != "split_nodes"
        {
            return Err(bad("missing leading columns"));
        }
        if &cols[cols.len() - 1] != "assignment" {
            return Err(bad("missing assignment column"));
        }
        let districts = cols.iter().filter(|c| c.starts_with("pop:")).count();
        let mut observables = Vec::new();
        for c in cols.iter().filter_map(|c| c.strip_prefix("sum:")) {
            let name = c
                .rsplit_once(':')
                .ok_or_else(|| bad("malformed sum column"))?
                .0;
            if observables.last().map(String::as_str) != Some(name) {
                observables.push(name.to_string());
            }
        }
        let schema = SampleSchema {
            districts,
            observables,
        };
        if schema.header().iter().map(String::as_str).ne(cols.iter()) {
            return Err(bad("columns are out of order"));
        }
        Ok(schema)
    }
}

/// Writes a versioned sample table.
pub struct SampleWriter<W: Write> {
    schema: SampleSchema,
    inner: csv::Writer<W>,
}

impl<W: Write> SampleWriter<W> {
    pub fn new(mut out: W, schema: SampleSchema) -> Result<Self, IoError> {
        writeln!(out, "{SAMPLES_HEADER}")?;
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(schema.header())?;
        Ok(SampleWriter { schema, inner })
    }

    pub fn write(&mut self, r: &SampleRecord) -> Result<(), IoError> {
        if r.populations.len() != self.schema.districts
            || r.sums.len() != self.schema.observables.len()
        {
            return Err(IoError::Schema(
                "record does not match the table columns".into(),
            ));
        }
        let mut row = vec![
            r.step.to_string(),
            u8::from(r.accepted).to_string(),
            r.split_nodes.to_string(),
        ];
        row.extend(r.populations.iter().map(u64::to_string));
        for sums in &r.sums {
            row.extend(sums.iter().map(f64::to_string));
        }
        row.push(r.assignment.as_ref().map_or(String::new(), |a| {
            a.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
        }));
        self.inner.write_record(&row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, IoError> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| IoError::Io(e.into_error()))
    }
}

/// Reads a sample table written by [`SampleWriter`].
pub fn read_samples<R: Read>(input: R) -> Result<(SampleSchema, Vec<SampleRecord>), IoError> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != SAMPLES_HEADER {
        return Err(IoError::Schema(format!(
            "expected {SAMPLES_HEADER:?}, found {:?}",
            first.trim_end()
        )));
    }
    let mut csv = csv::Reader::from_reader(reader);
    let schema = SampleSchema::parse(csv.headers()?)?;
    let d = schema.districts;
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| IoError::Schema(format!("not a number: {s:?}")))
    };
    let int = |s: &str| {
        s.parse::<u64>()
            .map_err(|_| IoError::Schema(format!("not an integer: {s:?}")))
    };
    let mut records = Vec::new();
    for row in csv.records() {
        let row = row?;
        let sums = (0..schema.observables.len())
            .map(|k| {
                (0..d)
                    .map(|i| num(&row[3 + d + k * d + i]))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let last = &row[row.len() - 1];
        let assignment = if last.is_empty() {
            None
        } else {
            Some(
                last.split(' ')
                    .map(|t| int(t).map(|v| v as usize))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        };
        records.push(SampleRecord {
            step: int(&row[0])?,
            accepted: &row[1] == "1",
            split_nodes: int(&row[2])? as usize,
            populations: (0..d).map(|i| int(&row[3 + i])).collect::<Result<_, _>>()?,
            sums,
            assignment,
        });
    }
    Ok((schema, records))
}

/// A state snapshot, with the hierarchy's block maps when it may have moved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotFile {
    pub state: Snapshot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition_maps: Option<Vec<Vec<usize>>>,
}

pub fn write_snapshot(
    path: &Path,
    state: &PlanState,
    hierarchy: Option<&Hierarchy>,
) -> Result<(), IoError> {
    let file = SnapshotFile {
        state: state.snapshot(),
        partition_maps: hierarchy.map(|h| h.partition_maps().to_vec()),
    };
    serde_json::to_writer(create(path)?, &file)?;
    Ok(())
}

/// Reads a snapshot, rebuilding the hierarchy on `base` when the file carries
/// block maps.
pub fn read_snapshot(
    path: &Path,
    h: &Hierarchy,
) -> Result<(Option<Hierarchy>, PlanState), IoError> {
    let file: SnapshotFile = serde_json::from_reader(BufReader::new(open(path)?))?;
    let moved = match &file.partition_maps {
        Some(maps) if maps.as_slice() != h.partition_maps() => {
            Some(Hierarchy::build(h.base().clone(), maps)?)
        }
        _ => None,
    };
    let state = PlanState::from_snapshot(moved.as_ref().unwrap_or(h), &file.state)?;
    Ok((moved, state))
}
